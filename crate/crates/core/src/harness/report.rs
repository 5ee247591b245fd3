use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_atomic, ExperimentConfig, ReplicateResult};
use crate::error::Result;
use crate::search::Method;

pub const REPLICATES_CSV: &str = "replicates.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const HISTORY_CSV: &str = "history.csv";
pub const TRAINING_CSV: &str = "training.csv";
pub const BEST_CONFIGURATIONS_FILE: &str = "best_configurations.txt";

/// One row per replicate and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub dataset: String,
    pub baseline: String,
    pub arch: String,
    pub replicate: usize,
    pub seed: u64,
    pub method: String,
    pub input_af: String,
    pub hidden_af: String,
    pub output_af: String,
    pub search_fitness: Option<f64>,
    pub search_disqualified: bool,
    pub evaluations: usize,
    pub assembly_evaluations: usize,
    pub test_accuracy: f64,
    pub diverged: bool,
}

/// Mean test accuracy of one method over the replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub baseline: String,
    pub arch: String,
    pub method: String,
    pub replicates: usize,
    pub mean_test_accuracy: f64,
    /// Per-replicate accuracies in replicate order, separated by `;`.
    pub values: String,
}

/// One fitness evaluation made by a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub replicate: usize,
    pub method: String,
    pub evaluation: usize,
    pub iteration: usize,
    pub population: String,
    pub fitness: f64,
    pub disqualified: bool,
    pub assembly: bool,
}

/// One epoch of a final training run. The accuracy column holds the test
/// accuracy on the last epoch and is empty otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub replicate: usize,
    pub method: String,
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

pub fn replicate_rows(config: &ExperimentConfig, results: &[ReplicateResult]) -> Vec<ReplicateRow> {
    let mut rows = Vec::new();
    for r in results {
        for m in &r.methods {
            let c = &m.candidate;
            let [input_af, hidden_af, output_af] = c.expressions.clone();
            rows.push(ReplicateRow {
                dataset: config.dataset.name().into(),
                baseline: config.baseline.name().into(),
                arch: config.arch.name().into(),
                replicate: r.replicate,
                seed: r.seed,
                method: c.method.name().into(),
                input_af,
                hidden_af,
                output_af,
                search_fitness: c.fitness,
                search_disqualified: c.disqualified,
                evaluations: c.evaluations,
                assembly_evaluations: c.assembly_evaluations,
                test_accuracy: m.test_accuracy,
                diverged: m.diverged,
            });
        }
    }
    rows
}

/// Per-method means in the configured method order.
pub fn summarize(config: &ExperimentConfig, results: &[ReplicateResult]) -> Vec<SummaryRow> {
    let mut methods: Vec<Method> = Vec::new();
    for r in results {
        for m in &r.methods {
            if !methods.contains(&m.candidate.method) {
                methods.push(m.candidate.method);
            }
        }
    }
    methods
        .into_iter()
        .map(|method| {
            let values: Vec<f64> = results
                .iter()
                .flat_map(|r| r.methods.iter().filter(|m| m.candidate.method == method).map(|m| m.test_accuracy))
                .collect();
            SummaryRow {
                dataset: config.dataset.name().into(),
                baseline: config.baseline.name().into(),
                arch: config.arch.name().into(),
                method: method.name().into(),
                replicates: values.len(),
                mean_test_accuracy: values.iter().sum::<f64>() / values.len() as f64,
                values: values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
            }
        })
        .collect()
}

pub fn history_rows(results: &[ReplicateResult]) -> Vec<HistoryRow> {
    let mut rows = Vec::new();
    for r in results {
        for m in &r.methods {
            for h in &m.candidate.history {
                rows.push(HistoryRow {
                    replicate: r.replicate,
                    method: m.candidate.method.name().into(),
                    evaluation: h.evaluation,
                    iteration: h.iteration,
                    population: h.population.map_or("all", |p| p.name()).into(),
                    fitness: h.fitness,
                    disqualified: h.disqualified,
                    assembly: h.assembly,
                });
            }
        }
    }
    rows
}

pub fn training_rows(results: &[ReplicateResult]) -> Vec<TrainingRow> {
    let mut rows = Vec::new();
    for r in results {
        for m in &r.methods {
            let last = m.final_losses.len();
            for (e, &loss) in m.final_losses.iter().enumerate() {
                rows.push(TrainingRow {
                    replicate: r.replicate,
                    method: m.candidate.method.name().into(),
                    epoch: e + 1,
                    loss,
                    accuracy: (e + 1 == last).then_some(m.test_accuracy),
                });
            }
        }
    }
    rows
}

/// The `k` best (replicate, method) triples by test accuracy; ties keep
/// replicate order, then method order.
pub fn best_configurations(config: &ExperimentConfig, results: &[ReplicateResult], k: usize) -> String {
    let mut entries: Vec<_> = results.iter().flat_map(|r| r.methods.iter().map(move |m| (r.replicate, m))).collect();
    entries.sort_by(|a, b| b.1.test_accuracy.total_cmp(&a.1.test_accuracy));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Top {k} activation configurations by test accuracy ({} {}, {} baseline)",
        config.dataset,
        config.arch,
        config.baseline
    );
    for (rank, (replicate, m)) in entries.iter().take(k).enumerate() {
        let c = &m.candidate;
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{}. {:.2}%  {}  replicate {}{}",
            rank + 1,
            100.0 * m.test_accuracy,
            c.method,
            replicate,
            c.fitness.map_or(String::new(), |f| format!("  search fitness {f:.4}"))
        );
        for (role, e) in ["input", "hidden", "output"].iter().zip(&c.expressions) {
            let _ = writeln!(out, "   {role:<7} {e}");
        }
    }
    out
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| crate::error::Error::io("<csv buffer>", e))?;
    Ok(w.into_inner().map_err(|e| crate::error::Error::Format(e.to_string()))?)
}

/// Writes the four CSV files and the best-configurations report. Files whose
/// content would not change are left untouched.
pub fn emit_reports(config: &ExperimentConfig, results: &[ReplicateResult], dir: &Path) -> Result<()> {
    // Headers for empty tables, kept in sync with the row structs.
    let files: [(&str, Vec<u8>); 4] = [
        (
            REPLICATES_CSV,
            csv_bytes(
                &replicate_rows(config, results),
                &[
                    "dataset", "baseline", "arch", "replicate", "seed", "method", "input_af", "hidden_af", "output_af",
                    "search_fitness", "search_disqualified", "evaluations", "assembly_evaluations", "test_accuracy", "diverged",
                ],
            )?,
        ),
        (
            SUMMARY_CSV,
            csv_bytes(
                &summarize(config, results),
                &["dataset", "baseline", "arch", "method", "replicates", "mean_test_accuracy", "values"],
            )?,
        ),
        (
            HISTORY_CSV,
            csv_bytes(
                &history_rows(results),
                &["replicate", "method", "evaluation", "iteration", "population", "fitness", "disqualified", "assembly"],
            )?,
        ),
        (
            TRAINING_CSV,
            csv_bytes(&training_rows(results), &["replicate", "method", "epoch", "loss", "accuracy"])?,
        ),
    ];
    for (name, bytes) in files {
        write_atomic(&dir.join(name), &bytes)?;
    }
    write_atomic(
        &dir.join(BEST_CONFIGURATIONS_FILE),
        best_configurations(config, results, config.top_k).as_bytes(),
    )
}
