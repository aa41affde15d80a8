use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use distclust::classmodel::ClassModel;
use distclust::config::{train, RunConfig};
use distclust::corpus::{
    delete_pairs, filter_top_nouns, ingest_pairs, select_decision_pairs, split_train_test, write_pairs, DeletionSet,
    PairCorpus, DECISION_MAX_VERB_FREQ, DECISION_MIN_VERB_FREQ, DECISION_PAIR_COUNT,
};
use distclust::engine::{free_energy, AnnealConfig, AnnealStatus, StopCondition};
use distclust::eval::{build_decision_triples, metric_registry, sweep, write_tsv, SweepInputs};
use distclust::simplex::nats_to_bits;
use distclust::{modelfile, Error, Result};

#[derive(Parser)]
#[command(name = "distclust", version, about = "Distributional clustering of nouns by verb co-occurrence")]
struct Cli {
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    /// Worker threads for the numerical kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Anneal a pair file and write one model per critical beta.
    Train(TrainArgs),
    /// Show the nouns nearest each cluster centroid.
    Clusters {
        model: PathBuf,
        #[arg(short, default_value_t = 5)]
        k: usize,
    },
    /// Evaluate a sweep of models as TSV.
    Eval(EvalArgs),
    /// Print a noun's predicted verb distribution.
    Predict(PredictArgs),
    /// Split a pair file into training and test tokens.
    Split {
        pairs: PathBuf,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        train_fraction: f64,
        #[arg(long)]
        top_k_nouns: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Delete sampled pairs for the verb decision task.
    Delete {
        pairs: PathBuf,
        /// Corpus with the pairs removed.
        #[arg(long)]
        out: PathBuf,
        /// The removed `verb<TAB>noun` pairs.
        #[arg(long)]
        deleted_out: PathBuf,
        #[arg(long, default_value_t = DECISION_PAIR_COUNT)]
        count: usize,
        #[arg(long, default_value_t = DECISION_MIN_VERB_FREQ)]
        min_verb_freq: u64,
        #[arg(long, default_value_t = DECISION_MAX_VERB_FREQ)]
        max_verb_freq: u64,
        #[arg(long)]
        top_k_nouns: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    pairs: PathBuf,
    /// Output directory for `snapshot-NNN.dcm` and `final.dcm`.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = AnnealConfig::default().beta_init)]
    beta_init: f64,
    #[arg(long, default_value_t = AnnealConfig::default().beta_growth)]
    beta_growth: f64,
    #[arg(long, default_value_t = AnnealConfig::default().perturbation_eps)]
    eps: f64,
    /// Defaults to ten times `--eps`.
    #[arg(long)]
    merge_tol: Option<f64>,
    #[arg(long, default_value_t = AnnealConfig::default().convergence_tol)]
    tol: f64,
    #[arg(long, default_value_t = AnnealConfig::default().max_iters)]
    max_iters: usize,
    #[arg(long, default_value_t = AnnealConfig::default().max_clusters)]
    max_clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    top_k_nouns: Option<usize>,
    #[arg(long, default_value = "empirical")]
    noun_prior: String,
    #[arg(long)]
    target_clusters: Option<usize>,
    #[arg(long, default_value_t = StopCondition::default().beta_max)]
    beta_max: f64,
}

impl TrainArgs {
    fn config(&self) -> RunConfig {
        let defaults = AnnealConfig::default();
        RunConfig {
            anneal: AnnealConfig {
                beta_init: self.beta_init,
                beta_growth: self.beta_growth,
                perturbation_eps: self.eps,
                twin_merge_tol: self.merge_tol.unwrap_or(10.0 * self.eps),
                convergence_tol: self.tol,
                residual_tol: defaults.residual_tol,
                max_iters: self.max_iters,
                max_clusters: self.max_clusters,
                seed: self.seed,
            },
            stop: StopCondition {
                target_clusters: self.target_clusters,
                beta_max: self.beta_max,
            },
            top_k_nouns: self.top_k_nouns,
            noun_prior: self.noun_prior.clone(),
            ..RunConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Re,
    Decision,
}

#[derive(Args)]
struct EvalArgs {
    /// Model files, or directories whose `snapshot-*.dcm` files are used.
    #[arg(required = true)]
    models: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "re")]
    mode: Mode,
    /// Training pairs, for the training-set curve.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Held-out pairs for clustered nouns.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Held-out pairs for nouns that were not clustered.
    #[arg(long)]
    new: Option<PathBuf>,
    /// Undeleted pair file, for decision mode.
    #[arg(long)]
    original: Option<PathBuf>,
    /// Deleted pairs, for decision mode.
    #[arg(long)]
    deleted: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    model: PathBuf,
    /// A clustered noun.
    #[arg(long, conflicts_with = "dist", required_unless_present = "dist")]
    noun: Option<String>,
    /// `verb<TAB>weight` lines to fold in.
    #[arg(long)]
    dist: Option<PathBuf>,
    /// Drop fold-in mass on verbs no centroid covers.
    #[arg(long)]
    clip_unseen: bool,
}

fn read_pairs(path: &Path) -> Result<PairCorpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_pairs(BufReader::new(file)).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

/// Writes `body` to `path` through a temporary file in the same directory.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = BufWriter::new(tmp);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;
    let tmp = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let config = args.config();
    config.validate()?;
    let corpus = read_pairs(&args.pairs)?;
    let training = train(&corpus, &config, &mut |_| {})?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let mut stdout = std::io::stdout().lock();
    let out = |e| Error::io("<stdout>", e);
    writeln!(stdout, "beta\tclusters\tfree_energy\tavg_distortion\tentropy_bits").map_err(out)?;
    for (i, (snap, model)) in training.run.hierarchy.snapshots.iter().zip(&training.models).enumerate() {
        let d = free_energy(&snap.state);
        writeln!(
            stdout,
            "{}\t{}\t{}\t{}\t{}",
            snap.beta,
            model.num_clusters(),
            d.free_energy,
            d.avg_distortion,
            nats_to_bits(d.membership_entropy)
        )
        .map_err(out)?;
        modelfile::save(model, &args.out.join(format!("snapshot-{i:03}.dcm")))?;
    }
    if let Some(last) = training.models.last() {
        modelfile::save(last, &args.out.join("final.dcm"))?;
    }
    match training.run.status {
        AnnealStatus::Completed => Ok(()),
        AnnealStatus::Stalled { beta } => Err(Error::Stalled {
            beta,
            clusters: training.run.final_state.num_clusters(),
        }),
    }
}

fn cmd_clusters(path: &Path, k: usize) -> Result<()> {
    let model = modelfile::load(path)?;
    let mut stdout = std::io::stdout().lock();
    let out = |e| Error::io("<stdout>", e);
    for (&id, &prior) in model.cluster_ids().iter().zip(model.priors()) {
        writeln!(stdout, "cluster {id}\tprior {prior}").map_err(out)?;
        for (noun, d) in model.nearest_words(id, k)? {
            writeln!(stdout, "  {noun}\t{d}").map_err(out)?;
        }
    }
    Ok(())
}

fn model_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for input in inputs {
        if !input.is_dir() {
            paths.push(input.clone());
            continue;
        }
        let mut found: Vec<PathBuf> = std::fs::read_dir(input)
            .map_err(|e| Error::io(input, e))?
            .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(input, e)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("snapshot-") && n.ends_with(".dcm"))
            })
            .collect();
        if found.is_empty() {
            return Err(Error::EmptyInput(format!("no snapshot files in {}", input.display())));
        }
        found.sort();
        paths.extend(found);
    }
    Ok(paths)
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let models: Vec<ClassModel> = model_paths(&args.models)?
        .iter()
        .map(|p| modelfile::load(p))
        .collect::<Result<_>>()?;
    let load = |p: &Option<PathBuf>| p.as_deref().map(read_pairs).transpose();
    let registry = metric_registry();
    let (train, test, new, triples);
    let metric = match args.mode {
        Mode::Re => {
            train = load(&args.train)?;
            test = load(&args.test)?;
            new = load(&args.new)?;
            triples = None;
            if train.is_none() && test.is_none() && new.is_none() {
                return Err(Error::EmptyInput("re mode needs --train, --test or --new".into()));
            }
            registry.get("re")?
        }
        Mode::Decision => {
            let (Some(original), Some(deleted)) = (&args.original, &args.deleted) else {
                return Err(Error::EmptyInput("decision mode needs --original and --deleted".into()));
            };
            let original = read_pairs(original)?;
            let file = File::open(deleted).map_err(|e| Error::io(deleted, e))?;
            let del = DeletionSet::read(&original, BufReader::new(file))?;
            (train, test, new) = (None, None, None);
            triples = Some(build_decision_triples(&original, &del)?);
            registry.get("decision")?
        }
    };
    let inputs = SweepInputs {
        train: train.as_ref(),
        test: test.as_ref(),
        new: new.as_ref(),
        triples: triples.as_ref(),
    };
    let reports = sweep(&models, &inputs, &[metric])?;
    match &args.out {
        Some(path) => write_atomic(path, |w| write_tsv(metric, &reports, w)),
        None => write_tsv(metric, &reports, std::io::stdout().lock()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn read_weights(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
        let (verb, w) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected verb<TAB>weight".into()))?;
        let w: f64 = w.parse().map_err(|_| parse_err(format!("bad weight {w:?}")))?;
        out.push((verb.to_string(), w));
    }
    Ok(out)
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model = modelfile::load(&args.model)?;
    let dist = match (&args.noun, &args.dist) {
        (Some(noun), _) => model.predict_noun(noun)?,
        (None, Some(path)) => {
            let p = model.distribution_from_named(&read_weights(path)?, args.clip_unseen)?;
            model.mixture(&model.fold_in(&p)?)
        }
        (None, None) => unreachable!("clap requires --noun or --dist"),
    };
    let mut entries: Vec<(&str, f64)> = dist
        .entries()
        .iter()
        .map(|&(v, p)| (model.verbs().symbol(v), p))
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut stdout = BufWriter::new(std::io::stdout().lock());
    for (verb, p) in entries {
        writeln!(stdout, "{verb}\t{p}").map_err(|e| Error::io("<stdout>", e))?;
    }
    stdout.flush().map_err(|e| Error::io("<stdout>", e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Clusters { model, k } => cmd_clusters(&model, k),
        Command::Eval(args) => cmd_eval(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Split {
            pairs,
            train_out,
            test_out,
            train_fraction,
            top_k_nouns,
            seed,
        } => {
            let mut corpus = read_pairs(&pairs)?;
            if let Some(k) = top_k_nouns {
                corpus = filter_top_nouns(&corpus, k)?;
            }
            let (train, test) = split_train_test(&corpus, train_fraction, seed)?;
            write_atomic(&train_out, |w| write_pairs(&train, w))?;
            write_atomic(&test_out, |w| write_pairs(&test, w))
        }
        Command::Delete {
            pairs,
            out,
            deleted_out,
            count,
            min_verb_freq,
            max_verb_freq,
            top_k_nouns,
            seed,
        } => {
            let mut corpus = read_pairs(&pairs)?;
            if let Some(k) = top_k_nouns {
                corpus = filter_top_nouns(&corpus, k)?;
            }
            let del = select_decision_pairs(&corpus, count, min_verb_freq, max_verb_freq, seed)?;
            let kept = delete_pairs(&corpus, &del)?;
            write_atomic(&out, |w| write_pairs(&kept, w))?;
            write_atomic(&deleted_out, |w| del.write(&corpus, w))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new().filter_level(level).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("distclust: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("distclust: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
