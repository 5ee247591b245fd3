use std::ffi::OsString;
use std::fs;
use std::io::Read as _;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};
use rand::Rng as _;

use super::{load_experiment_data, run_experiment, ExperimentConfig, FINAL_EPOCHS, SPLIT_STREAM};
use crate::afprims::PrimitiveSet;
use crate::cgp::{decode, deserialize_genome, fixtures, serialize_genome, CgpConfig, Genome};
use crate::data::{split_three_way, DatasetName, Samples};
use crate::error::{Error, Result};
use crate::nn::{AfTriple, ArchKind, Architecture};
use crate::search::{run_method, Baseline, Candidate, DataFitness, FitnessFunction, FitnessOutcome, Method, SearchSettings, FITNESS_EPOCHS};
use crate::seed::{derive_seed, rng_from_seed};

/// Environment variable consulted when `--data-dir` is not given.
pub const DATA_DIR_ENV: &str = "AFCOEVO_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "afcoevo", version, about = "Evolve activation functions with Cartesian genetic programming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a full experiment: search, final training and reports.
    Run(RunArgs),
    /// Score one activation triple (JSON) with the search fitness protocol.
    Fitness(FitnessArgs),
    /// Print the expression encoded by a serialized genome.
    Decode(DecodeArgs),
    /// Run the built-in invariant checks.
    Selftest,
    /// Explain where to put the dataset files.
    DownloadInstructions {
        #[arg(long, value_parser = parse_dataset)]
        dataset: Option<DatasetName>,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long, value_parser = parse_dataset, default_value = "mnist")]
    dataset: DatasetName,
    #[arg(long, value_parser = parse_arch, default_value = "fcn")]
    arch: ArchKind,
    /// Directory holding one sub-directory per dataset [default: $AFCOEVO_DATA_DIR or ./data]
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Cap the pooled corpus at N samples (seeded uniform draw).
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = FITNESS_EPOCHS)]
    fitness_epochs: usize,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_baseline, default_value = "relu")]
    baseline: Baseline,
    /// Comma-separated subset of standard,random,evo-single,evo-triple,coevo.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "standard,random,evo-single,evo-triple,coevo")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Epochs of the final training run.
    #[arg(long, default_value_t = FINAL_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = CgpConfig::default().max_iter)]
    max_iter: usize,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Entries in best_configurations.txt.
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct FitnessArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON file with an activation triple or a search candidate.
    triple: PathBuf,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// Serialized genome file, or '-' for stdin.
    #[arg(required_unless_present = "sigmoid_fixture")]
    genome: Option<PathBuf>,
    /// Decode the built-in logistic-sigmoid example instead.
    #[arg(long)]
    sigmoid_fixture: bool,
    /// Also print the serialized genome.
    #[arg(long)]
    show_genome: bool,
}

fn parse_dataset(s: &str) -> std::result::Result<DatasetName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_arch(s: &str) -> std::result::Result<ArchKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_baseline(s: &str) -> std::result::Result<Baseline, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn data_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Process exit code for an error: 1 usage, 2 data, 3 runtime.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Genome(_) => 1,
        Error::Data { .. } | Error::Format(_) | Error::EmptyDataset => 2,
        _ => 3,
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            eprintln!("\n{}", Cli::command().render_usage());
            return 1;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run(args) => run(args),
        Command::Fitness(args) => fitness(args),
        Command::Decode(args) => decode_cmd(args),
        Command::Selftest => Ok(selftest()),
        Command::DownloadInstructions { dataset } => {
            for d in dataset.map_or(DatasetName::ALL.to_vec(), |d| vec![d]) {
                println!("{}", d.download_instructions());
            }
            Ok(0)
        }
    }
}

fn run(args: RunArgs) -> Result<i32> {
    let config = ExperimentConfig {
        methods: args.methods,
        replicates: args.replicates,
        seed: args.data.seed,
        final_epochs: args.epochs,
        fitness_epochs: args.data.fitness_epochs,
        max_iter: args.max_iter,
        data_dir: data_dir(args.data.data_dir),
        out_dir: args.out,
        threads: args.threads,
        subsample: args.data.subsample,
        top_k: args.top_k,
        quiet: args.quiet,
        ..ExperimentConfig::new(args.data.dataset, args.data.arch, args.baseline)
    };
    let out = run_experiment(&config)?;
    for row in &out.summary {
        println!("{:<11} mean test accuracy {:.4} over {} replicate(s)", row.method, row.mean_test_accuracy, row.replicates);
    }
    println!("reports written to {}", config.out_dir.display());
    Ok(0)
}

fn read_input(path: &PathBuf) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(|e| Error::io("<stdin>", e))?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| Error::io(path, e))
    }
}

fn fitness(args: FitnessArgs) -> Result<i32> {
    let text = read_input(&args.triple)?;
    let afs: AfTriple = match serde_json::from_str(&text) {
        Ok(afs) => afs,
        Err(e) => Candidate::from_json(&text).map(|c| c.af_triple).map_err(|_| Error::Format(format!("{}: {e}", args.triple.display())))?,
    };
    let d = args.data;
    let config = ExperimentConfig {
        seed: d.seed,
        subsample: d.subsample,
        data_dir: data_dir(d.data_dir),
        ..ExperimentConfig::new(d.dataset, d.arch, Baseline::Relu)
    };
    let data = load_experiment_data(&config)?;
    // The split of replicate 0 of a `run` with the same seed.
    let split = split_three_way(data.len(), derive_seed(config.replicate_seed(0), SPLIT_STREAM))?;
    let f = DataFitness::new(&data, &split.train1, &split.train2, Architecture::standard(d.arch))?.with_epochs(d.fitness_epochs);
    let out = f.evaluate(&afs, d.seed);
    println!("triple       {afs}");
    println!("fitness      {}", out.fitness);
    println!("disqualified {}", out.disqualified);
    Ok(0)
}

fn decode_cmd(args: DecodeArgs) -> Result<i32> {
    let genome = match (&args.genome, args.sigmoid_fixture) {
        (_, true) => fixtures::sigmoid_genome(),
        (Some(path), false) => deserialize_genome(&read_input(path)?)?,
        (None, false) => return Err(Error::Config("no genome given".into())),
    };
    if args.show_genome {
        println!("{}", serialize_genome(&genome).trim_end());
    }
    println!("{}", decode(&genome).expression());
    Ok(0)
}

fn check(name: &str, ok: bool, failures: &mut usize) {
    println!("{} {name}", if ok { "ok    " } else { "FAILED" });
    if !ok {
        *failures += 1;
    }
}

/// Quick invariant suite; returns the exit code.
fn selftest() -> i32 {
    let mut failures = 0;

    let sig = decode(&fixtures::sigmoid_genome());
    let ok = [-2.0f64, 0.0, 2.0].iter().all(|&x| (sig.eval(x) - 1.0 / (1.0 + (-x).exp())).abs() < 1e-9)
        && (sig.eval_with_derivative(0.0).1 - 0.25).abs() < 1e-9;
    check("sigmoid example decodes and differentiates", ok, &mut failures);

    let mut rng = rng_from_seed(1);
    let set = PrimitiveSet::standard();
    let mut worst: f64 = 0.0;
    for p in set.primitives() {
        let mut done = 0;
        while done < 200 {
            let a: f64 = rng.random_range(-4.0..4.0);
            let b: f64 = rng.random_range(-4.0..4.0);
            if p.op.near_kink(a, b, 1e-3) {
                continue;
            }
            let args: Vec<f64> = if p.arity() == 1 { vec![a] } else { vec![a, b] };
            let grads = p.partials(&args, Default::default());
            for (i, g) in grads.iter().enumerate() {
                let h = 1e-5;
                let (mut up, mut down) = (args.clone(), args.clone());
                up[i] += h;
                down[i] -= h;
                let fd = (p.eval(&up) - p.eval(&down)) / (2.0 * h);
                worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1.0));
            }
            done += 1;
        }
    }
    check("primitive derivatives match finite differences", worst < 1e-4, &mut failures);

    let g = Genome::random(CgpConfig::default(), set.clone(), &mut rng).expect("default config is valid");
    let ok = (0..2000).all(|_| g.mutate(3, &mut rng).validate().is_ok());
    check("mutation keeps genomes valid", ok, &mut failures);

    let roundtrip = deserialize_genome(&serialize_genome(&g)).map(|h| h == g).unwrap_or(false);
    check("genome serialization round-trips", roundtrip, &mut failures);

    let stub = |_: &AfTriple, seed: u64| FitnessOutcome::scored((seed % 97) as f64 / 100.0);
    let settings = SearchSettings::new(Baseline::Relu, 3);
    let budgets: Vec<usize> = Method::ALL
        .iter()
        .map(|&m| run_method(m, &stub, &settings).map_or(usize::MAX, |c| c.total_evaluations()))
        .collect();
    check("search budgets are 0/150/601/601/604", budgets == [0, 150, 601, 601, 604], &mut failures);

    let ok = (0..100).all(|s| {
        let split = split_three_way(1000, s).expect("1000 samples split");
        let mut all: Vec<usize> = split.train1.iter().chain(&split.train2).chain(&split.test).copied().collect();
        all.sort_unstable();
        split.sizes() == (600, 250, 150) && all == (0..1000).collect::<Vec<_>>()
    });
    check("splits are disjoint and exhaustive", ok, &mut failures);

    if failures == 0 {
        println!("all checks passed");
        0
    } else {
        println!("{failures} check(s) failed");
        3
    }
}
