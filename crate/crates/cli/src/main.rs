use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use reqconflict::config::{ConfigError, RunConfig};
use reqconflict::corpus::{generate_synthetic, parse_requirements, serialize_requirements, CorpusError};
use reqconflict::io::write_atomic;
use reqconflict::ner::{
    best_grid_point, evaluate_ner, grid_search, parse_annotated, train_crf_with_report, CrfHyperParams, TagSet,
};
use reqconflict::pipeline::{
    load_dataset, make_backend, report, run_phase1_configured, run_phase2, write_run, PipelineError,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "reqconflict", version, about = "Detect conflicting software requirements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a requirements CSV for schema and labelling errors.
    Validate { path: PathBuf },
    /// Learn similarity cutoffs and write candidate conflicts per fold.
    Phase1(RunArgs),
    /// Phase 1 followed by entity-overlap filtering.
    Phase2(RunArgs),
    /// Train a CRF entity tagger on an annotated corpus.
    TrainNer(TrainArgs),
    /// Rebuild report.md for a run directory, or compare every run under a
    /// parent directory.
    Report { run_dir: PathBuf },
    /// Plant synthetic conflicts into a requirements CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Requirements CSV (default: bundled synthetic set).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override a configuration key, e.g. `--set folds=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Annotated `token<TAB>label` corpus (default: bundled corpus).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Where to write the model.
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    c1: f64,
    #[arg(long, default_value_t = 0.1)]
    c2: f64,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    /// Also report k-fold token-level scores.
    #[arg(long)]
    evaluate: bool,
    /// Grid-search these c1 values by k-fold macro F1 before training.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    grid_c1: Vec<f64>,
    /// Grid-search these c2 values by k-fold macro F1 before training.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    grid_c2: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Source CSV (default: bundled base requirements).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    conflicts: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            match e {
                PipelineError::Corpus(c) => return corpus_code(c),
                PipelineError::Config(_) => return EXIT_CONFIG,
                _ => {}
            }
        }
        if let Some(c) = cause.downcast_ref::<CorpusError>() {
            return corpus_code(c);
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
    }
    EXIT_RUNTIME
}

fn corpus_code(e: &CorpusError) -> u8 {
    match e {
        CorpusError::Io(_) => EXIT_RUNTIME,
        CorpusError::TooFewFolds { .. } => EXIT_CONFIG,
        _ => EXIT_VALIDATION,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Ok(out) = std::env::var("REQCONFLICT_OUT") {
        cfg.output = PathBuf::from(out);
    }
    if let Some(path) = &args.config {
        cfg.merge(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    }
    for o in &args.overrides {
        cfg.apply_override(o).with_context(|| format!("--set {o}"))?;
    }
    if let Some(d) = &args.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(o) = &args.output {
        cfg.output = o.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs, with_phase2: bool) -> Result<()> {
    let cfg = load_config(args)?;
    let set = load_dataset(&cfg)?;
    log::info!("{}: {} requirements, {} conflicting", set.name, set.len(), set.conflict_count());
    let p1 = run_phase1_configured(&cfg, &set)?;
    println!("phase 1 macro {}", p1.summary);
    let p2 = if with_phase2 {
        let backend = make_backend(&cfg)?;
        let p2 = run_phase2(&set, &p1, backend.as_ref(), &cfg.phase2_options())?;
        println!("phase 2 ({}) macro {}", p2.backend, p2.summary);
        Some(p2)
    } else {
        None
    };
    let summary = write_run(&cfg.output, &cfg, &set, &p1, p2.as_ref())?;
    if let Some(change) = summary.get("phase2.f1_change") {
        println!("F1 change: {change}");
    }
    println!("wrote {}", cfg.output.display());
    Ok(())
}

fn validate(path: &Path) -> Result<()> {
    let text = read(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match parse_requirements(&name, text.as_bytes()) {
        Ok(set) => {
            println!("ok: {} requirements, {} conflicting", set.len(), set.conflict_count());
            Ok(())
        }
        Err(CorpusError::Invalid(violations)) => {
            for v in &violations {
                eprintln!("{v}");
            }
            Err(CorpusError::Invalid(violations)).context(format!("{} is invalid", path.display()))
        }
        Err(e) => Err(e).context(format!("{} is invalid", path.display())),
    }
}

fn train_ner(args: &TrainArgs) -> Result<()> {
    let tagset = TagSet::software();
    let corpus = match &args.corpus {
        Some(path) => parse_annotated(read(path)?.as_bytes(), &tagset).with_context(|| path.display().to_string())?,
        None => reqconflict::bundled::toy_ner_corpus(),
    };
    let mut hp = CrfHyperParams { c1: args.c1, c2: args.c2, max_iterations: args.max_iterations };
    if !args.grid_c1.is_empty() || !args.grid_c2.is_empty() {
        let c1s = if args.grid_c1.is_empty() { vec![args.c1] } else { args.grid_c1.clone() };
        let c2s = if args.grid_c2.is_empty() { vec![args.c2] } else { args.grid_c2.clone() };
        let points = grid_search(&corpus, &tagset, &c1s, &c2s, args.max_iterations, args.folds, args.seed)?;
        println!("c1\tc2\tmacro F1");
        for p in &points {
            println!("{}\t{}\t{}", p.hyperparams.c1, p.hyperparams.c2, p.report.macro_avg.f1.display());
        }
        hp = best_grid_point(&points).expect("grid is non-empty").hyperparams;
        println!("best: c1 = {}, c2 = {}", hp.c1, hp.c2);
    }
    let (model, report) = train_crf_with_report(&corpus, &tagset, &hp)?;
    println!(
        "trained on {} sentences: {} iterations, loss {:.4}, training accuracy {:.4}, {} active features",
        corpus.len(),
        report.iterations,
        report.losses.last().copied().unwrap_or(f64::NAN),
        model.token_accuracy(&corpus),
        model.active_features()
    );
    write_atomic(&args.model_out, model.save().as_bytes())
        .with_context(|| format!("writing {}", args.model_out.display()))?;
    if args.evaluate {
        let ner = evaluate_ner(&corpus, &tagset, &hp, args.folds, args.seed)?;
        print!("{}", ner.render());
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let base = match &args.input {
        Some(path) => {
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            parse_requirements(&name, read(path)?.as_bytes())?
        }
        None => reqconflict::bundled::base_requirements(),
    };
    let out = serialize_requirements(&generate_synthetic(&base, args.conflicts, args.seed)?);
    match &args.output {
        Some(path) => write_atomic(path, out.as_bytes()).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{out}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { path } => validate(path),
        Command::Phase1(args) => run(args, false),
        Command::Phase2(args) => run(args, true),
        Command::TrainNer(args) => train_ner(args),
        Command::Report { run_dir } => report(run_dir).map(|r| print!("{r}")).map_err(Into::into),
        Command::Synth(args) => synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
