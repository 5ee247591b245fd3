//! Acceptance suite: one PASS / FAIL / BLOCKED line per criterion.
//!
//! Run with `cargo test --release --test acceptance`; pass substrings as
//! extra arguments (`-- budget data`) to run a subset. The heavy criteria
//! train on MNIST and take tens of minutes on one core. The process exits
//! non-zero only if a check itself crashes; criterion outcomes are reported,
//! not enforced.

mod common;

use std::collections::HashSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use afcoevo::afprims::{Mode, PrimitiveSet, SampledParams};
use afcoevo::cgp::{decode, fixtures};
use afcoevo::data::{load_corpus, split_three_way, Dataset, DatasetName, Samples};
use afcoevo::harness::{cap_pool, run_experiment_on, ExperimentConfig};
use afcoevo::nn::{AfTriple, ArchKind, Architecture};
use afcoevo::search::{run_coevo, run_method, Baseline, DataFitness, FitnessFunction, FitnessOutcome, Method, SearchSettings};
use afcoevo::seed::rng_from_seed;
use afcoevo::Error;
use common::{data_dir, evolved_gradient_suite, gradient_check, random_activation, tiny_cnn, tiny_fcn};
use rand::Rng;

// Tolerances and thresholds.
const SIGMOID_TOL: f64 = 1e-9;
const PRIMITIVE_FD_STEP: f64 = 1e-5;
const PRIMITIVE_REL_TOL: f64 = 1e-4;
const PRIMITIVE_KINK_EXCLUSION: f64 = 1e-3;
const PRIMITIVE_POINTS: usize = 1000;
const CONTINUITY_TOL: f64 = 1e-9;
const MODEL_REL_TOL: f64 = 1e-3;
const EVOLVED_AFS: usize = 20;
const FCN_BAND: f64 = 0.92;
const CNN_SUBSAMPLE: usize = 20_000;
const CNN_SUBSAMPLE_BAND: f64 = 0.93;
const FINAL_EPOCHS: usize = 30;
const SMOKE_SUBSAMPLE: usize = 5000;
const SMOKE_MAX_ITER: usize = 5;
const COMPARISON_REPLICATES: usize = 5;
const COMPARISON_MARGIN: f64 = 0.02;
const COMPARISON_REQUIRED: usize = 4;
const SPLIT_SEEDS: u64 = 100;
/// Master seed of every data-driven criterion, fixed before any run.
const SEED: u64 = 0;

enum Status {
    Pass,
    Fail,
    Blocked,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn blocked(detail: impl Into<String>) -> Outcome {
    Outcome {
        status: Status::Blocked,
        detail: detail.into(),
    }
}

fn mnist() -> Result<Dataset, String> {
    match load_corpus(DatasetName::Mnist, &data_dir()) {
        Ok(c) => c.pooled().map_err(|e| e.to_string()),
        Err(e) => Err(format!("MNIST unavailable under {}: {e}", data_dir().display())),
    }
}

fn sigmoid_fixture() -> Outcome {
    let g = fixtures::sigmoid_genome();
    let genes_ok = g.genes() == [1, 0, 1, 3, 3, 0, 0, 4, 2, 2, 5, 0, 6];
    let af = decode(&g);
    let worst = [-2.0f64, 0.0, 2.0]
        .iter()
        .map(|&x| (af.eval(x) - 1.0 / (1.0 + (-x).exp())).abs())
        .fold(0.0, f64::max);
    let d0 = af.eval_with_derivative(0.0).1;
    verdict(
        genes_ok && worst <= SIGMOID_TOL && (d0 - 0.25).abs() <= SIGMOID_TOL,
        format!("expression {}; max |f - sigmoid| = {worst:.1e}; f'(0) = {d0}", af.expression()),
    )
}

fn primitive_suite() -> Outcome {
    let mut rng = rng_from_seed(SEED);
    let set = PrimitiveSet::standard();
    let mut worst: f64 = 0.0;
    let mut worst_name = "";
    for p in set.primitives() {
        let mut done = 0;
        while done < PRIMITIVE_POINTS {
            let (a, b): (f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            if p.op.near_kink(a, b, PRIMITIVE_KINK_EXCLUSION) {
                continue;
            }
            let args: Vec<f64> = if p.arity() == 1 { vec![a] } else { vec![a, b] };
            for (k, analytic) in p.partials(&args, SampledParams::default()).into_iter().enumerate() {
                let shifted = |d: f64| {
                    let mut v = args.clone();
                    v[k] += d;
                    p.eval(&v)
                };
                let numeric = (shifted(PRIMITIVE_FD_STEP) - shifted(-PRIMITIVE_FD_STEP)) / (2.0 * PRIMITIVE_FD_STEP);
                // Relative error, with an absolute floor for vanishing slopes.
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2);
                if rel > worst {
                    worst = rel;
                    worst_name = p.name;
                }
            }
            done += 1;
        }
    }
    // Continuity at every branch boundary. HardShrink is discontinuous by
    // definition, so its jump is checked to be exactly lambda instead.
    let mut jump_worst: f64 = 0.0;
    let mut hard_shrink_ok = true;
    for p in set.primitives() {
        for k in p.kink_points() {
            let args = |x: f64| if p.arity() == 1 { vec![x] } else { vec![x, 0.3] };
            let d = 1e-10;
            let jump = (p.eval(&args(k + d)) - p.eval(&args(k - d))).abs();
            if p.name == "HardShrink" {
                hard_shrink_ok &= (jump - 0.5).abs() < CONTINUITY_TOL;
            } else {
                jump_worst = jump_worst.max(jump);
            }
        }
        if p.arity() == 2 {
            // Max / Min switch branch on the diagonal.
            for a in [-1.3, 0.0, 2.2] {
                let jump = (p.eval(&[a + 1e-10, a]) - p.eval(&[a - 1e-10, a])).abs();
                jump_worst = jump_worst.max(jump);
            }
        }
    }
    verdict(
        set.len() == 15 && worst <= PRIMITIVE_REL_TOL && jump_worst <= CONTINUITY_TOL && hard_shrink_ok,
        format!(
            "{} primitives x {PRIMITIVE_POINTS} points: worst rel. err {worst:.1e} ({worst_name}); worst boundary jump {jump_worst:.1e}; HardShrink jump = lambda: {hard_shrink_ok}",
            set.len()
        ),
    )
}

fn model_gradient_check() -> Outcome {
    // Literal 4 -> 3 -> 2 network with random evolved activations.
    let literal = || Architecture::Fcn {
        first_width: Some(3),
        hidden_width: 3,
        hidden_layers: 0,
    };
    let mut rng = rng_from_seed(SEED);
    let mut literal_worst: f64 = 0.0;
    let mut done = 0;
    while done < EVOLVED_AFS {
        let afs = AfTriple::new(random_activation(&mut rng), random_activation(&mut rng), random_activation(&mut rng));
        if let Some(r) = gradient_check(literal(), afs, [1, 1, 4], 2, Mode::Eval, rng.random()) {
            literal_worst = literal_worst.max(r.max_rel_err);
            done += 1;
        }
    }
    let (fcn_worst, fcn_afs, _) = evolved_gradient_suite(tiny_fcn, [1, 2, 2], 2, EVOLVED_AFS, SEED + 1);
    let (cnn_worst, cnn_afs, _) = evolved_gradient_suite(tiny_cnn, [1, 8, 8], 3, EVOLVED_AFS, SEED + 2);
    let worst = literal_worst.max(fcn_worst).max(cnn_worst);
    verdict(
        worst <= MODEL_REL_TOL,
        format!(
            "4->3->2 FCN worst {literal_worst:.1e}; 4->3->3->2 FCN worst {fcn_worst:.1e} ({fcn_afs} AFs); 1x8x8 CNN worst {cnn_worst:.1e} ({cnn_afs} AFs)"
        ),
    )
}

fn standard_accuracy(data: &Dataset, arch: ArchKind, subsample: Option<usize>) -> Result<f64, Error> {
    let out = tempfile::tempdir().map_err(|e| Error::io("tempdir", e))?;
    let config = ExperimentConfig {
        methods: vec![Method::Standard],
        seed: SEED,
        final_epochs: FINAL_EPOCHS,
        subsample,
        out_dir: out.path().to_path_buf(),
        quiet: true,
        ..ExperimentConfig::new(DatasetName::Mnist, arch, Baseline::Relu)
    };
    let r = run_experiment_on(&config, &cap_pool(&config, data.clone())?)?;
    Ok(r.replicates[0].methods[0].test_accuracy)
}

fn baseline_bands() -> Outcome {
    let data = match mnist() {
        Ok(d) => d,
        Err(e) => return blocked(e),
    };
    let t = Instant::now();
    let fcn = standard_accuracy(&data, ArchKind::Fcn, None);
    let fcn_secs = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let cnn = standard_accuracy(&data, ArchKind::Cnn, Some(CNN_SUBSAMPLE));
    let cnn_secs = t.elapsed().as_secs_f64();
    match (fcn, cnn) {
        (Ok(f), Ok(c)) => verdict(
            f >= FCN_BAND && c >= CNN_SUBSAMPLE_BAND,
            format!(
                "FCN full MNIST {:.2}% (band >= {:.1}%, {fcn_secs:.0}s); CNN on {CNN_SUBSAMPLE} samples {:.2}% (relaxed band >= {:.1}%, {cnn_secs:.0}s); full-corpus CNN band not run",
                100.0 * f,
                100.0 * FCN_BAND,
                100.0 * c,
                100.0 * CNN_SUBSAMPLE_BAND
            ),
        ),
        (f, c) => verdict(false, format!("run failed: fcn {:?}, cnn {:?}", f.err(), c.err())),
    }
}

struct Counting(AtomicUsize);

impl FitnessFunction for Counting {
    fn evaluate(&self, afs: &AfTriple, seed: u64) -> FitnessOutcome {
        self.0.fetch_add(1, Ordering::SeqCst);
        let h = afs.expressions().iter().flat_map(|e| e.bytes()).fold(seed, |h, b| afcoevo::seed::derive_seed(h, b as u64));
        FitnessOutcome::scored((h % 900) as f64 / 1000.0)
    }
}

fn budget_counters() -> Outcome {
    let settings = SearchSettings::new(Baseline::Relu, SEED);
    let expected = [
        (Method::Random, 150, 0),
        (Method::EvoSingle, 601, 0),
        (Method::EvoTriple, 601, 0),
        (Method::Coevo, 603, 1),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (method, search, assembly) in expected {
        let f = Counting(AtomicUsize::new(0));
        let c = run_method(method, &f, &settings).expect("search runs");
        let calls = f.0.load(Ordering::SeqCst);
        ok &= c.evaluations == search && c.assembly_evaluations == assembly && calls == search + assembly;
        parts.push(if assembly > 0 {
            format!("{method} {} (+{} assembly)", c.evaluations, c.assembly_evaluations)
        } else {
            format!("{method} {}", c.evaluations)
        });
    }
    verdict(ok, parts.join(", "))
}

fn coevo_smoke() -> Outcome {
    let data = match mnist() {
        Ok(d) => d.subsample(SMOKE_SUBSAMPLE, SEED).expect("subsample"),
        Err(e) => return blocked(e),
    };
    let split = split_three_way(data.len(), SEED).expect("split");
    let fitness = DataFitness::new(&data, &split.train1, &split.train2, Architecture::fcn()).expect("fitness").with_epochs(1);
    let settings = SearchSettings {
        cgp: afcoevo::cgp::CgpConfig {
            max_iter: SMOKE_MAX_ITER,
            ..Default::default()
        },
        ..SearchSettings::new(Baseline::Relu, SEED)
    };
    let c = match run_coevo(&fitness, &settings) {
        Ok(c) => c,
        Err(e) => return verdict(false, format!("run failed: {e}")),
    };
    let monotone = afcoevo::nn::Role::ALL.iter().all(|&r| {
        let seq: Vec<f64> = c.parents.iter().filter(|p| p.population == Some(r)).map(|p| p.parent_fitness).collect();
        seq.len() == SMOKE_MAX_ITER + 1 && seq.windows(2).all(|w| w[1] >= w[0])
    });
    let seed_best = c.history[..3].iter().map(|h| h.fitness).fold(f64::MIN, f64::max);
    let returned = c.fitness.unwrap_or(0.0);
    verdict(
        monotone && returned >= seed_best,
        format!(
            "parents non-decreasing: {monotone}; returned {} fitness {returned:.4} >= generation-0 baseline {seed_best:.4}; {} + {} evaluations",
            c.af_triple,
            c.evaluations,
            c.assembly_evaluations
        ),
    )
}

fn method_comparison() -> Outcome {
    let pooled = match mnist() {
        Ok(d) => d,
        Err(e) => return blocked(e),
    };
    let out = tempfile::tempdir().expect("tempdir");
    let config = ExperimentConfig {
        replicates: COMPARISON_REPLICATES,
        seed: SEED,
        max_iter: SMOKE_MAX_ITER,
        subsample: Some(SMOKE_SUBSAMPLE),
        out_dir: out.path().to_path_buf(),
        quiet: true,
        ..ExperimentConfig::new(DatasetName::Mnist, ArchKind::Fcn, Baseline::Relu)
    };
    let result = match cap_pool(&config, pooled).and_then(|data| run_experiment_on(&config, &data)) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("run failed: {e}")),
    };
    let mut wins = 0;
    let mut parts = Vec::new();
    for r in &result.replicates {
        let acc = |m: Method| r.methods.iter().find(|x| x.candidate.method == m).map(|x| x.test_accuracy).unwrap_or(0.0);
        let standard = acc(Method::Standard);
        let best = [Method::Random, Method::EvoSingle, Method::EvoTriple, Method::Coevo].map(acc).into_iter().fold(0.0, f64::max);
        if best >= standard - COMPARISON_MARGIN {
            wins += 1;
        }
        parts.push(format!("{:.2}/{:.2}", 100.0 * best, 100.0 * standard));
    }
    verdict(
        wins >= COMPARISON_REQUIRED,
        format!(
            "{wins}/{COMPARISON_REPLICATES} replicates with best search >= standard - {:.0} points (best/standard %: {})",
            100.0 * COMPARISON_MARGIN,
            parts.join(", ")
        ),
    )
}

fn determinism() -> Outcome {
    if mnist().is_err() {
        return blocked("MNIST unavailable");
    }
    let run = |dir: &std::path::Path| {
        Command::new(env!("CARGO_BIN_EXE_afcoevo"))
            .args(["run", "--seed", "7", "--threads", "1", "--dataset", "mnist", "--arch", "fcn", "--subsample", "1000"])
            .args(["--max-iter", "2", "--fitness-epochs", "1", "--epochs", "3", "--replicates", "2", "--quiet"])
            .arg("--data-dir")
            .arg(data_dir())
            .arg("--out")
            .arg(dir)
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    };
    let (a, b) = (tempfile::tempdir().expect("tempdir"), tempfile::tempdir().expect("tempdir"));
    if !(run(a.path()) && run(b.path())) {
        return verdict(false, "a run failed".into());
    }
    let files = ["replicates.csv", "summary.csv", "history.csv", "training.csv"];
    let same: Vec<bool> = files
        .iter()
        .map(|f| fs::read(a.path().join(f)).ok() == fs::read(b.path().join(f)).ok())
        .collect();
    verdict(
        same.iter().all(|&s| s),
        format!("all five methods, 2 replicates: {} of {} CSV files byte-identical", same.iter().filter(|&&s| s).count(), files.len()),
    )
}

fn data_layer() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    match mnist() {
        Ok(d) => {
            let sizes = split_three_way(d.len(), SEED).expect("split").sizes();
            ok &= d.len() == 70_000 && sizes == (42_000, 17_500, 10_500);
            parts.push(format!("MNIST pooled {} -> {sizes:?}", d.len()));
        }
        Err(e) => {
            ok = false;
            parts.push(e);
        }
    }
    let disjoint = (0..SPLIT_SEEDS).all(|s| {
        let sp = split_three_way(1000, s).expect("split");
        let all: HashSet<usize> = sp.train1.iter().chain(&sp.train2).chain(&sp.test).copied().collect();
        all.len() == 1000 && sp.train1.len() + sp.train2.len() + sp.test.len() == 1000
    });
    ok &= disjoint;
    parts.push(format!("split disjointness over {SPLIT_SEEDS} seeds: {disjoint}"));
    let usps_blocked = match load_corpus(DatasetName::Usps, &data_dir()) {
        Ok(c) => {
            let sizes = (c.train.len(), c.test.len());
            ok &= sizes == (7291, 2007);
            parts.push(format!("USPS {} + {}", sizes.0, sizes.1));
            false
        }
        Err(e) => {
            parts.push(format!("USPS not verifiable ({e})"));
            true
        }
    };
    let detail = parts.join("; ");
    if ok && usps_blocked {
        blocked(detail)
    } else {
        verdict(ok, detail)
    }
}

type Check = fn() -> Outcome;

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let checks: [(&str, &str, Check); 9] = [
        ("sigmoid", "decoding the sigmoid example genome", sigmoid_fixture),
        ("primitives", "primitive gradient and continuity suite", primitive_suite),
        ("gradients", "full-model gradient check with evolved activations", model_gradient_check),
        ("baselines", "standard FCN/CNN accuracy bands on MNIST", baseline_bands),
        ("budget", "fitness-evaluation budget counters", budget_counters),
        ("coevo", "coevolution smoke run", coevo_smoke),
        ("comparison", "search methods vs. standard over 5 replicates", method_comparison),
        ("determinism", "byte-identical CSVs for equal seeds", determinism),
        ("data", "data layer sizes and split disjointness", data_layer),
    ];
    let (mut pass, mut fail, mut block, mut crashed) = (0, 0, 0, 0);
    for (id, name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| {
            crashed += 1;
            verdict(false, "check panicked".into())
        });
        let tag = match outcome.status {
            Status::Pass => {
                pass += 1;
                "PASS   "
            }
            Status::Fail => {
                fail += 1;
                "FAIL   "
            }
            Status::Blocked => {
                block += 1;
                "BLOCKED"
            }
        };
        println!("{tag} {id:<11} {name}: {} [{:.1}s]", outcome.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {pass} passed, {fail} failed, {block} blocked");
    if crashed > 0 {
        std::process::exit(1);
    }
}
