//! `joinscout`: profile datasets once, then rank candidate equi-joins from the stored profiles.
//!
//! Exit status: 0 on success, 1 on a command-line usage error, 2 when reading,
//! profiling, training or ranking fails.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use joinscout::discovery::{discover_by_attribute, discover_by_dataset, write_ranking, ClassView};
use joinscout::evalkit::{aggregate_binary, binary_confusion, confusion, render_report};
use joinscout::ingest::{dataset_name, load_dataset, CsvOptions, SampleSpec};
use joinscout::learner::{predict_classes, train_chain, ChainConfig, DEFAULT_DOWNGRADE_THRESHOLD};
use joinscout::oracle::{class_counts, label_corpus, read_corpus, write_corpus, AttributeRef, QualityThresholds};
use joinscout::store::{
    load_model, load_profiles, profile_file, profile_path, save_model, save_profiles, verify_source,
    ProfileDocument, ProfileStore,
};
use joinscout::synth::{generate_lake, write_lake, LakeSpec};
use joinscout::Execution;

const PROFILES_ENV: &str = "JOINSCOUT_PROFILES";

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Data(#[from] joinscout::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

type CliResult<T = ()> = Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Parser)]
#[command(name = "joinscout", version, about = "Profile-based join discovery for tabular data lakes")]
struct Cli {
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Profile delimited files and store one document per dataset.
    Profile(ProfileArgs),
    /// Label every cross-dataset attribute pair of a lake with its exact join quality.
    Label(LabelArgs),
    /// Train the classifier chain on a labeled corpus.
    Train(TrainArgs),
    /// Rank join candidates for a query dataset or one of its attributes.
    Discover(DiscoverArgs),
    /// Confusion matrices and per-class metrics of a model on a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Write a seeded synthetic lake of CSV files.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct CsvArgs {
    /// Field delimiter (a single ASCII character, or "tab").
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    delimiter: u8,
    /// Treat the first row as data.
    #[arg(long)]
    no_header: bool,
}

impl CsvArgs {
    fn options(&self) -> CsvOptions {
        CsvOptions {
            delimiter: self.delimiter,
            has_header: !self.no_header,
            ..CsvOptions::default()
        }
    }
}

#[derive(Args, Clone)]
struct SampleArgs {
    /// Fraction of values inspected when deciding whether an attribute is string-typed.
    #[arg(long, default_value_t = 1.0, value_parser = parse_fraction)]
    sample: f64,
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
}

impl SampleArgs {
    fn spec(&self) -> SampleSpec {
        SampleSpec {
            fraction: self.sample,
            seed: self.sample_seed,
        }
    }
}

#[derive(Args)]
struct ProfileArgs {
    /// Delimited files to profile.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Output directory for `<dataset>.profile.json` (default: beside each file).
    #[arg(long, env = PROFILES_ENV)]
    profiles: Option<PathBuf>,
    #[command(flatten)]
    csv: CsvArgs,
    #[command(flatten)]
    sample: SampleArgs,
}

#[derive(Args)]
struct LabelArgs {
    /// Directory of delimited files.
    lake: PathBuf,
    /// Labeled corpus output (CSV).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
    #[command(flatten)]
    sample: SampleArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled corpus produced by `label`.
    corpus: PathBuf,
    /// Model output (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Train five independent forests instead of a chain.
    #[arg(long)]
    no_chain: bool,
    /// Reseed every forest and the class balancing.
    #[arg(long)]
    seed: Option<u64>,
    /// Gap below which a weak top class is downgraded.
    #[arg(long, default_value_t = DEFAULT_DOWNGRADE_THRESHOLD, value_parser = parse_threshold)]
    downgrade_threshold: f64,
}

#[derive(Args)]
struct DiscoverArgs {
    /// Query dataset file; its profile must already exist.
    #[arg(long)]
    query: PathBuf,
    /// Query attribute; omit to query every attribute of the dataset.
    #[arg(long)]
    attribute: Option<String>,
    /// Directory of candidate datasets.
    #[arg(long)]
    repo: PathBuf,
    /// Directory holding profile documents (default: beside each file).
    #[arg(long, env = PROFILES_ENV)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    /// Also list Moderate and Poor candidates.
    #[arg(long)]
    all_classes: bool,
    /// Also list candidates predicted as None.
    #[arg(long)]
    include_none: bool,
    /// Ranking output (CSV); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Labeled corpus produced by `label`.
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Report output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = LakeSpec::default().datasets)]
    datasets: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "tab" | "\\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be one ASCII character, got {s:?}")),
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if f > 0.0 && f <= 1.0 {
        Ok(f)
    } else {
        Err("sample fraction must be in (0, 1]".into())
    }
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if t > 0.0 && t < 1.0 {
        Ok(t)
    } else {
        Err("downgrade threshold must be in (0, 1)".into())
    }
}

/// Delimited files directly inside `dir`, sorted by name.
fn lake_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| matches!(e.to_string_lossy().to_ascii_lowercase().as_str(), "csv" | "tsv" | "txt"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn profile_location(source: &Path, profiles: Option<&Path>) -> PathBuf {
    let dir = profiles
        .map(Path::to_path_buf)
        .unwrap_or_else(|| source.parent().map(Path::to_path_buf).unwrap_or_default());
    profile_path(&dir, &dataset_name(source))
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p).map_err(io_err(p))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_profile(args: &ProfileArgs, exec: Execution) -> CliResult {
    if let Some(dir) = &args.profiles {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    for path in &args.paths {
        let doc = profile_file(path, &args.csv.options(), args.sample.spec(), exec)?;
        let out = profile_location(path, args.profiles.as_deref());
        save_profiles(&doc, &out)?;
        log::info!(
            "{}: {} eligible, {} ineligible attributes -> {}",
            doc.dataset,
            doc.attributes.len(),
            doc.ineligible.len(),
            out.display()
        );
    }
    Ok(())
}

fn cmd_label(args: &LabelArgs, exec: Execution) -> CliResult {
    let files = lake_files(&args.lake)?;
    let lake = files
        .iter()
        .map(|p| {
            let mut d = load_dataset(p, &args.csv.options())?;
            d.infer_eligibility(args.sample.spec());
            Ok(d)
        })
        .collect::<Result<Vec<_>, joinscout::Error>>()?;
    let pairs = label_corpus(&lake, &QualityThresholds::default(), exec)?;
    let file = fs::File::create(&args.out).map_err(io_err(&args.out))?;
    write_corpus(&pairs, io::BufWriter::new(file))?;
    log::info!(
        "{} pairs from {} datasets, per class {:?}",
        pairs.len(),
        lake.len(),
        class_counts(pairs.iter().map(|p| &p.label))
    );
    Ok(())
}

fn read_corpus_file(path: &Path) -> CliResult<Vec<joinscout::oracle::LabeledPair>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(read_corpus(io::BufReader::new(file), path)?)
}

fn cmd_train(args: &TrainArgs, exec: Execution) -> CliResult {
    let pairs = read_corpus_file(&args.corpus)?;
    let rows: Vec<&[f64]> = pairs.iter().map(|p| p.features.values.as_slice()).collect();
    let labels: Vec<_> = pairs.iter().map(|p| p.label).collect();
    let mut config = ChainConfig::default();
    if let Some(seed) = args.seed {
        config = config.reseeded(seed);
    }
    config.chain_enabled = !args.no_chain;
    config.downgrade_threshold = args.downgrade_threshold;
    let model = train_chain(&rows, &labels, &config, exec)?;
    save_model(&model, &args.out)?;
    log::info!("model {} trained on {} pairs", model.digest(), pairs.len());
    Ok(())
}

/// Profile document of `source`, or an error telling the user to profile it.
fn stored_profile(source: &Path, profiles: Option<&Path>) -> CliResult<ProfileDocument> {
    let location = profile_location(source, profiles);
    if !location.exists() {
        return Err(joinscout::Error::Unprofiled {
            dataset: dataset_name(source),
            attribute: "*".into(),
        }
        .into());
    }
    let doc = load_profiles(&location)?;
    verify_source(&doc);
    Ok(doc)
}

fn cmd_discover(args: &DiscoverArgs, exec: Execution) -> CliResult {
    let profiles = args.profiles.as_deref();
    let query = stored_profile(&args.query, profiles)?;
    let query_name = query.dataset.clone();
    let mut docs = vec![query];
    for file in lake_files(&args.repo)? {
        if dataset_name(&file) != query_name {
            docs.push(stored_profile(&file, profiles)?);
        }
    }
    let store = ProfileStore::from_documents(docs)?;
    let model = load_model(&args.model)?;

    let ranking = match &args.attribute {
        Some(a) => discover_by_attribute(&AttributeRef::new(&query_name, a), &store, &model, exec)?,
        None => discover_by_dataset(&query_name, &store, &model, exec)?,
    };
    let view = if args.include_none {
        ClassView::EVERYTHING
    } else if args.all_classes {
        ClassView::ALL_CLASSES
    } else {
        ClassView::INTERESTING
    };
    let out = open_output(args.out.as_deref())?;
    write_ranking(&ranking, view, out)?;
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs, exec: Execution) -> CliResult {
    let model = load_model(&args.model)?;
    let pairs = read_corpus_file(&args.corpus)?;
    let rows: Vec<&[f64]> = pairs.iter().map(|p| p.features.values.as_slice()).collect();
    let truth: Vec<_> = pairs.iter().map(|p| p.label).collect();
    let predicted = predict_classes(&model, &rows, exec)?;
    let cm = confusion(&predicted, &truth)?;
    debug_assert_eq!(aggregate_binary(&cm), binary_confusion(&predicted, &truth)?);
    let mut out = open_output(args.out.as_deref())?;
    let path = args.out.clone().unwrap_or_else(|| PathBuf::from("stdout"));
    out.write_all(render_report(&cm).as_bytes())
        .and_then(|_| out.flush())
        .map_err(io_err(&path))
}

fn cmd_synth(args: &SynthArgs) -> CliResult {
    let spec = LakeSpec {
        datasets: args.datasets,
        ..LakeSpec::default().with_seed(args.seed)
    };
    let lake = generate_lake(&spec)?;
    let paths = write_lake(&lake, &args.out)?;
    log::info!("wrote {} datasets to {}", paths.len(), args.out.display());
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match &cli.command {
        Command::Profile(a) => cmd_profile(a, exec),
        Command::Label(a) => cmd_label(a, exec),
        Command::Train(a) => cmd_train(a, exec),
        Command::Discover(a) => cmd_discover(a, exec),
        Command::Evaluate(a) => cmd_evaluate(a, exec),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
