//! Experiment runner: per-replicate split, every configured search, final
//! training on train1 + train2, test scoring and the report files.

mod cli;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cgp::CgpConfig;
use crate::data::{load_corpus, split_three_way, AccessMonitor, Dataset, DatasetName, Samples, N_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{evaluate, train, AfTriple, ArchKind, Architecture, Model, NetworkSpec, TrainConfig};
use crate::search::{run_method, Baseline, Candidate, DataFitness, Method, SearchSettings, FITNESS_EPOCHS};
use crate::seed::{derive_seed, rng_from_seed};

pub use cli::{cli_main, exit_code, DATA_DIR_ENV};
pub use report::{
    best_configurations, emit_reports, history_rows, replicate_rows, summarize, training_rows, HistoryRow, ReplicateRow,
    SummaryRow, TrainingRow, BEST_CONFIGURATIONS_FILE, HISTORY_CSV, REPLICATES_CSV, SUMMARY_CSV, TRAINING_CSV,
};

/// Default epochs of the final training run.
pub const FINAL_EPOCHS: usize = 30;

const SUBSAMPLE_STREAM: u64 = 0x5AB5;
const SPLIT_STREAM: u64 = 0x5917;
const SEARCH_STREAM: u64 = 0x5EA0;
const FINAL_STREAM: u64 = 0xF1A1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetName,
    pub arch: ArchKind,
    pub baseline: Baseline,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub seed: u64,
    pub final_epochs: usize,
    pub fitness_epochs: usize,
    pub max_iter: usize,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub threads: usize,
    /// Cap on the pooled corpus, drawn uniformly with the master seed.
    pub subsample: Option<usize>,
    /// Entries in the best-configurations report.
    pub top_k: usize,
    /// Suppress progress lines on stderr.
    pub quiet: bool,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetName, arch: ArchKind, baseline: Baseline) -> Self {
        Self {
            dataset,
            arch,
            baseline,
            methods: Method::ALL.to_vec(),
            replicates: 1,
            seed: 0,
            final_epochs: FINAL_EPOCHS,
            fitness_epochs: FITNESS_EPOCHS,
            max_iter: CgpConfig::default().max_iter,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("results"),
            threads: 1,
            subsample: None,
            top_k: 3,
            quiet: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max-iter must be at least 1".into()));
        }
        if self.subsample == Some(0) {
            return Err(Error::Config("subsample must be positive".into()));
        }
        Ok(())
    }

    /// Seed of replicate `r`; independent of how many replicates run.
    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        derive_seed(self.seed, replicate as u64)
    }

    pub fn cgp(&self) -> CgpConfig {
        CgpConfig {
            max_iter: self.max_iter,
            ..CgpConfig::default()
        }
    }

    /// Everything that determines a replicate's results. Stored replicates
    /// are reused only when this matches.
    fn fingerprint(&self) -> Fingerprint {
        Fingerprint {
            dataset: self.dataset,
            arch: self.arch,
            baseline: self.baseline,
            methods: self.methods.clone(),
            seed: self.seed,
            final_epochs: self.final_epochs,
            fitness_epochs: self.fitness_epochs,
            max_iter: self.max_iter,
            subsample: self.subsample,
        }
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub dataset: DatasetName,
    pub arch: ArchKind,
    pub baseline: Baseline,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub final_epochs: usize,
    pub fitness_epochs: usize,
    pub max_iter: usize,
    pub subsample: Option<usize>,
}

/// Final training and test score of one method's chosen triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub candidate: Candidate,
    /// Accuracy on the held-out test split; 0 when the final run diverged.
    pub test_accuracy: f64,
    pub diverged: bool,
    /// Mean training loss of each completed final epoch.
    pub final_losses: Vec<f64>,
    pub search_seconds: f64,
    pub final_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub fingerprint: Fingerprint,
    pub replicate: usize,
    pub seed: u64,
    /// Sizes of train1, train2 and test.
    pub split_sizes: [usize; 3],
    /// Reads of test samples made during the searches (always 0).
    pub test_accesses_during_search: usize,
    pub methods: Vec<MethodResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub replicates: Vec<ReplicateResult>,
    pub summary: Vec<SummaryRow>,
}

/// The pooled corpus of `config.dataset`, capped by `config.subsample`.
pub fn load_experiment_data(config: &ExperimentConfig) -> Result<Dataset> {
    cap_pool(config, load_corpus(config.dataset, &config.data_dir)?.pooled()?)
}

/// Applies `config.subsample` to an already pooled corpus.
pub fn cap_pool(config: &ExperimentConfig, pooled: Dataset) -> Result<Dataset> {
    match config.subsample {
        Some(n) => pooled.subsample(n, derive_seed(config.seed, SUBSAMPLE_STREAM)),
        None => Ok(pooled),
    }
}

fn replicate_path(out_dir: &Path, replicate: usize) -> PathBuf {
    out_dir.join("replicates").join(format!("replicate-{replicate:03}.json"))
}

/// Writes `contents` via a temporary file and a rename, and only if the file
/// does not already hold exactly these bytes.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if fs::read(path).is_ok_and(|old| old == contents) {
        return Ok(());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// A stored replicate of the same configuration, if one exists.
fn load_stored(config: &ExperimentConfig, replicate: usize) -> Result<Option<ReplicateResult>> {
    let path = replicate_path(&config.out_dir, replicate);
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(None);
    };
    let stored: ReplicateResult = match serde_json::from_str(&text) {
        Ok(r) => r,
        // A torn or foreign file is recomputed.
        Err(_) => return Ok(None),
    };
    if stored.fingerprint != config.fingerprint() {
        return Err(Error::Config(format!(
            "{} holds results of a different configuration; use another --out directory",
            path.display()
        )));
    }
    Ok(Some(stored))
}

/// Runs one replicate on `data`: searches first (with every test read
/// counted), then the final trainings and the single test scoring.
pub fn run_replicate(config: &ExperimentConfig, data: &Dataset, replicate: usize) -> Result<ReplicateResult> {
    let seed = config.replicate_seed(replicate);
    let split = split_three_way(data.len(), derive_seed(seed, SPLIT_STREAM))?;
    let arch = Architecture::standard(config.arch);
    let monitor = AccessMonitor::new(data, &split.test);
    let fitness = DataFitness::new(&monitor, &split.train1, &split.train2, arch.clone())?.with_epochs(config.fitness_epochs);

    let mut searched = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let settings = SearchSettings {
            cgp: config.cgp(),
            threads: config.threads,
            ..SearchSettings::new(config.baseline, derive_seed(seed, SEARCH_STREAM + method as u64))
        };
        let start = Instant::now();
        let candidate = run_method(method, &fitness, &settings)?;
        let secs = start.elapsed().as_secs_f64();
        config.log(format!(
            "replicate {replicate} {method}: {} fitness {} after {} evaluations ({secs:.1}s)",
            candidate.af_triple,
            candidate.fitness.map_or("-".to_string(), |f| format!("{f:.4}")),
            candidate.total_evaluations()
        ));
        searched.push((candidate, secs));
    }
    let test_accesses = monitor.hits();
    if test_accesses != 0 {
        return Err(Error::Protocol(format!("searches read {test_accesses} test samples")));
    }

    let train_all = split.train_all();
    let mut methods = Vec::with_capacity(searched.len());
    for (candidate, search_seconds) in searched {
        let start = Instant::now();
        let (test_accuracy, diverged, final_losses) =
            final_training(&arch, &candidate.af_triple, data, &train_all, &split.test, config.final_epochs, derive_seed(seed, FINAL_STREAM))?;
        let final_seconds = start.elapsed().as_secs_f64();
        config.log(format!(
            "replicate {replicate} {}: test accuracy {test_accuracy:.4}{} ({final_seconds:.1}s)",
            candidate.method,
            if diverged { " (diverged)" } else { "" }
        ));
        methods.push(MethodResult {
            candidate,
            test_accuracy,
            diverged,
            final_losses,
            search_seconds,
            final_seconds,
        });
    }
    Ok(ReplicateResult {
        fingerprint: config.fingerprint(),
        replicate,
        seed,
        split_sizes: [split.train1.len(), split.train2.len(), split.test.len()],
        test_accesses_during_search: test_accesses,
        methods,
    })
}

/// Trains a fresh network on `train` and scores it once on `test`. A run
/// that produces a non-finite loss or non-finite test logits scores 0.
pub fn final_training(
    arch: &Architecture,
    afs: &AfTriple,
    data: &dyn Samples,
    train_idx: &[usize],
    test_idx: &[usize],
    epochs: usize,
    seed: u64,
) -> Result<(f64, bool, Vec<f64>)> {
    let spec = NetworkSpec::new(arch.clone(), afs.clone(), data.dims(), N_CLASSES);
    let mut model = Model::<f32>::new(spec, &mut rng_from_seed(seed))?;
    let losses = match train(&mut model, data, train_idx, &TrainConfig::new(epochs, derive_seed(seed, 1))) {
        Ok(report) => report.epoch_losses,
        Err(Error::NonFiniteLoss { .. }) => return Ok((0.0, true, Vec::new())),
        Err(e) => return Err(e),
    };
    let eval = evaluate(&mut model, data, test_idx)?;
    if eval.non_finite {
        return Ok((0.0, true, losses));
    }
    Ok((eval.accuracy, false, losses))
}

/// Runs (or resumes) a whole experiment and writes every report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let data = load_experiment_data(config)?;
    run_experiment_on(config, &data)
}

/// [`run_experiment`] on an already loaded pool.
pub fn run_experiment_on(config: &ExperimentConfig, data: &Dataset) -> Result<ExperimentOutput> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    config.log(format!(
        "{} {} {}: {} samples, {} replicate(s), methods {}",
        config.dataset,
        config.arch,
        config.baseline,
        data.len(),
        config.replicates,
        config.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")
    ));
    let mut replicates = Vec::with_capacity(config.replicates);
    for r in 0..config.replicates {
        let result = match load_stored(config, r)? {
            Some(stored) => {
                config.log(format!("replicate {r}: reusing stored result"));
                stored
            }
            None => {
                let result = run_replicate(config, data, r)?;
                write_atomic(&replicate_path(&config.out_dir, r), serde_json::to_string_pretty(&result)?.as_bytes())?;
                result
            }
        };
        replicates.push(result);
    }
    emit_reports(config, &replicates, &config.out_dir)?;
    Ok(ExperimentOutput {
        summary: summarize(config, &replicates),
        replicates,
    })
}
