//! Benchmark harness: ingest, train, refine, sweep, compare, eval.
//!
//! Every run is driven by one JSON config (see [`config::RunConfig`]);
//! CLI flags override config keys. Outputs are JSON summaries (fully
//! deterministic for a fixed config + seed), CSV traces carrying wall-time,
//! and JSON checkpoints.

mod config;

use std::fs;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{Optimizer, RunConfig};
use lfa::data::{parse_ratings, split, RatingMatrix};
use lfa::model::EvalReport;
use lfa::pso::{plfa_train, write_swarm_log, MetricMode};
use lfa::refine::{antennae_sweep, sequential_refine};
use lfa::train::{adam_train, sgd_train, TrainTrace};
use lfa::{Error, FactorState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Rmse,
    Mae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Parser)]
#[command(name = "lfa-bench", about = "Latent factor training and refinement benchmark")]
struct Cli {
    /// JSON config file; flags below override its keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides config `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel phases (default: available cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Gating/fitness metric
    #[arg(long, global = true, value_enum)]
    metric: Option<MetricArg>,

    /// Dataset path (overrides config `dataset`)
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,

    /// Field delimiter; "," default, "\t" accepted
    #[arg(long, global = true)]
    delimiter: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the dataset, split it, and persist the three parts + manifest
    Ingest,
    /// Train from a fresh initialization with the selected optimizer
    Train(TrainArgs),
    /// Refine a checkpoint with sequential beetle search
    Refine(RefineArgs),
    /// Run the initial-antennae-length sweep
    Sweep(SweepArgs),
    /// Train all baselines plus refinement on identical splits
    Compare,
    /// Evaluate a checkpoint on one split
    Eval(EvalArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    optimizer: Option<Optimizer>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    factors: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
}

#[derive(Args)]
struct RefineArgs {
    /// Trained checkpoint to refine; trains one first when omitted
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    al0: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::EmptyEval => 2,
        Error::Io(_) => 3,
        Error::Parse { .. } | Error::DuplicatePair { .. } => 4,
        Error::Diverged { .. } => 5,
        Error::Checkpoint(_) | Error::Index(_) => 6,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg: RunConfig = match &cli.config {
        Some(path) => {
            let file = File::open(path)?;
            serde_json::from_reader(BufReader::new(file))
                .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = Some(threads);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(metric) = cli.metric {
        cfg.metric = match metric {
            MetricArg::Rmse => MetricMode::Rmse,
            MetricArg::Mae => MetricMode::Mae,
        };
    }
    if let Some(dataset) = &cli.dataset {
        cfg.dataset = Some(dataset.clone());
    }
    if let Some(delim) = &cli.delimiter {
        cfg.delimiter = delim.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = load_config(&cli)?;
    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&cfg.out_dir)?;
    match cli.command {
        Command::Ingest => cmd_ingest(&cfg),
        Command::Train(args) => {
            if let Some(o) = args.optimizer {
                cfg.optimizer = o;
            }
            if let Some(x) = args.eta {
                cfg.eta = x;
            }
            if let Some(x) = args.lambda {
                cfg.lambda = x;
            }
            if let Some(x) = args.factors {
                cfg.factors = x;
            }
            if let Some(x) = args.max_epochs {
                cfg.max_epochs = x;
            }
            cmd_train(&cfg)
        }
        Command::Refine(args) => {
            if let Some(x) = args.al0 {
                cfg.refine.al0 = x;
            }
            if let Some(x) = args.max_rounds {
                cfg.refine.max_rounds = x;
            }
            cmd_refine(&cfg, args.checkpoint.as_deref())
        }
        Command::Sweep(args) => cmd_sweep(&cfg, args.checkpoint.as_deref()),
        Command::Compare => cmd_compare(&cfg),
        Command::Eval(args) => cmd_eval(&cfg, &args.checkpoint, args.split),
    }
}

struct Pipeline {
    train: RatingMatrix,
    val: RatingMatrix,
    test: RatingMatrix,
    manifest: SplitManifest,
}

#[derive(Debug, Clone, Serialize)]
struct SplitManifest {
    seed: u64,
    num_rows: usize,
    num_cols: usize,
    sizes: SplitSizes,
    content_hash: String,
}

#[derive(Debug, Clone, Serialize)]
struct SplitSizes {
    train: usize,
    val: usize,
    test: usize,
}

fn content_hash(matrix: &RatingMatrix) -> String {
    let mut hasher = Sha256::new();
    for t in matrix.triplets() {
        hasher.update(format!("{},{},{:016x}\n", t.row, t.col, t.value.to_bits()));
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn load_dataset(cfg: &RunConfig) -> Result<RatingMatrix, Error> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset configured (set `dataset` or --dataset)".into()))?;
    let delimiter = match cfg.delimiter.as_str() {
        "," => ',',
        "\t" | "\\t" | "tab" => '\t',
        other if other.chars().count() == 1 => other.chars().next().unwrap(),
        other => return Err(Error::Config(format!("delimiter must be one character, got {other:?}"))),
    };
    let file = File::open(path)?;
    parse_ratings(BufReader::new(file), delimiter)
}

fn load_pipeline(cfg: &RunConfig) -> Result<Pipeline, Error> {
    let full = load_dataset(cfg)?;
    let spec = cfg.split_spec();
    let (train, val, test) = split(&full, &spec)?;
    let manifest = SplitManifest {
        seed: spec.seed,
        num_rows: full.num_rows(),
        num_cols: full.num_cols(),
        sizes: SplitSizes {
            train: train.len(),
            val: val.len(),
            test: test.len(),
        },
        content_hash: content_hash(&full),
    };
    Ok(Pipeline {
        train,
        val,
        test,
        manifest,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::Config(format!("serialize {}: {e}", path.display())))?;
    w.write_all(b"\n")?;
    Ok(())
}

fn write_triplets(path: &Path, matrix: &RatingMatrix) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in matrix.triplets() {
        writeln!(w, "{},{},{}", t.row, t.col, t.value)?;
    }
    Ok(())
}

fn cmd_ingest(cfg: &RunConfig) -> Result<(), Error> {
    let p = load_pipeline(cfg)?;
    write_triplets(&cfg.out_dir.join("train.csv"), &p.train)?;
    write_triplets(&cfg.out_dir.join("val.csv"), &p.val)?;
    write_triplets(&cfg.out_dir.join("test.csv"), &p.test)?;
    write_json(&cfg.out_dir.join("split_manifest.json"), &p.manifest)?;
    println!("{}", serde_json::to_string_pretty(&p.manifest).unwrap());
    Ok(())
}

/// Result of one optimizer run; `seconds` stays out of the JSON summary so
/// summaries are byte-identical across reruns.
struct TrainOutcome {
    state: FactorState,
    trace: TrainTrace,
    swarm_log: Option<Vec<lfa::pso::SwarmRoundRow>>,
    iterations: usize,
    seconds: f64,
}

fn run_optimizer(cfg: &RunConfig, p: &Pipeline) -> Result<TrainOutcome, Error> {
    let init = FactorState::init(
        p.manifest.num_rows,
        p.manifest.num_cols,
        cfg.factors,
        cfg.init_seed(),
        cfg.init_scale,
    )?;
    let start = Instant::now();
    let (state, trace, swarm_log) = match cfg.optimizer {
        Optimizer::Sgd => {
            let (s, t) = sgd_train(init, &p.train, &p.val, &cfg.sgd_config())?;
            (s, t, None)
        }
        Optimizer::Adam => {
            let (s, t) = adam_train(init, &p.train, &p.val, &cfg.adam_config())?;
            (s, t, None)
        }
        Optimizer::Plfa => {
            let (s, t, rounds) =
                plfa_train(init, &p.train, &p.val, &cfg.swarm_config(), &cfg.sgd_config())?;
            (s, t, Some(rounds))
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let iterations =
        trace.rows.len() + swarm_log.as_ref().map_or(0, |r| r.len());
    Ok(TrainOutcome {
        state,
        trace,
        swarm_log,
        iterations,
        seconds,
    })
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    command: &'static str,
    optimizer: String,
    config: &'a RunConfig,
    split: &'a SplitManifest,
    epochs: usize,
    val: EvalReport,
    test: EvalReport,
}

fn cmd_train(cfg: &RunConfig) -> Result<(), Error> {
    let p = load_pipeline(cfg)?;
    let out = run_optimizer(cfg, &p)?;
    out.state.save_file(cfg.out_dir.join("checkpoint.json"))?;
    out.trace
        .write_csv(BufWriter::new(File::create(cfg.out_dir.join("train_trace.csv"))?))?;
    if let Some(rounds) = &out.swarm_log {
        write_swarm_log(
            rounds,
            BufWriter::new(File::create(cfg.out_dir.join("swarm_rounds.csv"))?),
        )?;
    }
    let summary = TrainSummary {
        command: "train",
        optimizer: cfg.optimizer.to_string(),
        config: cfg,
        split: &p.manifest,
        epochs: out.iterations,
        val: out.state.evaluate(&p.val)?,
        test: out.state.evaluate(&p.test)?,
    };
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    eprintln!("trained in {:.3}s", out.seconds);
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(())
}

fn load_checkpoint_for(p: &Pipeline, path: &Path) -> Result<FactorState, Error> {
    let state = FactorState::load_file(path)?;
    if state.num_rows != p.manifest.num_rows || state.num_cols != p.manifest.num_cols {
        return Err(Error::Checkpoint(format!(
            "checkpoint is {}x{} but dataset is {}x{}",
            state.num_rows, state.num_cols, p.manifest.num_rows, p.manifest.num_cols
        )));
    }
    Ok(state)
}

fn base_state(cfg: &RunConfig, p: &Pipeline, checkpoint: Option<&Path>) -> Result<FactorState, Error> {
    match checkpoint {
        Some(path) => load_checkpoint_for(p, path),
        None => Ok(run_optimizer(cfg, p)?.state),
    }
}

#[derive(Serialize)]
struct BeforeAfter {
    val: EvalReport,
    test: EvalReport,
}

#[derive(Serialize)]
struct RefineSummary<'a> {
    command: &'static str,
    config: &'a RunConfig,
    split: &'a SplitManifest,
    rounds_committed: usize,
    before: BeforeAfter,
    after: BeforeAfter,
}

fn cmd_refine(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(), Error> {
    let p = load_pipeline(cfg)?;
    let state = base_state(cfg, &p, checkpoint)?;
    let before = BeforeAfter {
        val: state.evaluate(&p.val)?,
        test: state.evaluate(&p.test)?,
    };
    let start = Instant::now();
    let (refined, trace) = sequential_refine(state, &p.train, &p.val, &cfg.refine_config())?;
    let seconds = start.elapsed().as_secs_f64();
    refined.save_file(cfg.out_dir.join("checkpoint_refined.json"))?;
    trace.write_csv(BufWriter::new(File::create(
        cfg.out_dir.join("refine_trace.csv"),
    )?))?;
    let summary = RefineSummary {
        command: "refine",
        config: cfg,
        split: &p.manifest,
        rounds_committed: trace.committed_rounds(),
        before,
        after: BeforeAfter {
            val: refined.evaluate(&p.val)?,
            test: refined.evaluate(&p.test)?,
        },
    };
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    eprintln!("refined in {seconds:.3}s");
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(())
}

#[derive(Serialize)]
struct SweepSummaryRow {
    al0: f64,
    test_rmse: f64,
    test_mae: f64,
    rounds: usize,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    command: &'static str,
    config: &'a RunConfig,
    split: &'a SplitManifest,
    rows: Vec<SweepSummaryRow>,
}

fn cmd_sweep(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(), Error> {
    let p = load_pipeline(cfg)?;
    let state = base_state(cfg, &p, checkpoint)?;
    let report = antennae_sweep(
        &state,
        &p.train,
        &p.val,
        &p.test,
        &cfg.refine_config(),
        &cfg.sweep,
    )?;
    report.write_csv(BufWriter::new(File::create(cfg.out_dir.join("sweep.csv"))?))?;
    let summary = SweepSummary {
        command: "sweep",
        config: cfg,
        split: &p.manifest,
        rows: report
            .rows
            .iter()
            .map(|r| SweepSummaryRow {
                al0: r.al0,
                test_rmse: r.test_rmse,
                test_mae: r.test_mae,
                rounds: r.rounds,
            })
            .collect(),
    };
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(())
}

#[derive(Serialize)]
#[serde(untagged)]
enum CompareRow {
    Ok {
        method: String,
        test_rmse: f64,
        test_mae: f64,
        iterations: usize,
    },
    Failed {
        method: String,
        failed: bool,
        error: String,
    },
}

#[derive(Serialize)]
struct CompareSummary<'a> {
    command: &'static str,
    config: &'a RunConfig,
    split: &'a SplitManifest,
    rows: Vec<CompareRow>,
}

fn cmd_compare(cfg: &RunConfig) -> Result<(), Error> {
    let p = load_pipeline(cfg)?;
    let mut rows = Vec::new();
    let mut csv_lines = vec!["method,test_rmse,test_mae,seconds,iterations".to_string()];

    let methods: [(&str, Optimizer, bool); 4] = [
        ("sgd", Optimizer::Sgd, false),
        ("adam", Optimizer::Adam, false),
        ("plfa", Optimizer::Plfa, false),
        ("plfa+a2bas", Optimizer::Plfa, true),
    ];
    for (name, optimizer, with_refine) in methods {
        let method_cfg = RunConfig {
            optimizer,
            ..cfg.clone()
        };
        let result = (|| -> Result<(EvalReport, usize, f64), Error> {
            let out = run_optimizer(&method_cfg, &p)?;
            let mut state = out.state;
            let mut iterations = out.iterations;
            let mut seconds = out.seconds;
            if with_refine {
                let start = Instant::now();
                let (refined, trace) =
                    sequential_refine(state, &p.train, &p.val, &cfg.refine_config())?;
                seconds += start.elapsed().as_secs_f64();
                iterations += trace.committed_rounds();
                state = refined;
            }
            Ok((state.evaluate(&p.test)?, iterations, seconds))
        })();
        match result {
            Ok((rep, iterations, seconds)) => {
                csv_lines.push(format!(
                    "{name},{},{},{seconds:.3},{iterations}",
                    rep.rmse, rep.mae
                ));
                rows.push(CompareRow::Ok {
                    method: name.to_string(),
                    test_rmse: rep.rmse,
                    test_mae: rep.mae,
                    iterations,
                });
            }
            Err(err) => {
                csv_lines.push(format!("{name},,,,"));
                rows.push(CompareRow::Failed {
                    method: name.to_string(),
                    failed: true,
                    error: err.to_string(),
                });
            }
        }
    }

    fs::write(cfg.out_dir.join("comparison.csv"), csv_lines.join("\n") + "\n")?;
    let summary = CompareSummary {
        command: "compare",
        config: cfg,
        split: &p.manifest,
        rows,
    };
    write_json(&cfg.out_dir.join("comparison.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    command: &'static str,
    split_name: &'static str,
    split: &'a SplitManifest,
    metrics: EvalReport,
}

fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, which: SplitArg) -> Result<(), Error> {
    let p = load_pipeline(cfg)?;
    let state = load_checkpoint_for(&p, checkpoint)?;
    let (name, data): (&'static str, &RatingMatrix) = match which {
        SplitArg::Train => ("train", &p.train),
        SplitArg::Val => ("val", &p.val),
        SplitArg::Test => ("test", &p.test),
    };
    let summary = EvalSummary {
        command: "eval",
        split_name: name,
        split: &p.manifest,
        metrics: state.evaluate(data)?,
    };
    write_json(&cfg.out_dir.join("eval.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(())
}
