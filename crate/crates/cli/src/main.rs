//! `ane`: corpus generation, training, indexing, recognition and evaluation
//! for acoustic neighbor embeddings.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use ane_core::config::{read_settings, Settings};
use ane_core::corpus::{
    format_transcription, parse_transcription, read_corpus, read_lexicon_file, read_posteriorgram, sample_corpus,
    write_corpus, write_lexicon_file, ConfusionKernel, Lexicon, Transcription, Utterance, World,
};
use ane_core::encoder::{read_checkpoint, write_checkpoint, Input, ParameterSet};
use ane_core::error::{Error, Result};
use ane_core::eval;
use ane_core::par::Parallelism;
use ane_core::rng;
use ane_core::search::{read_index, write_index, Metric};
use ane_core::trainer::{self, format_loss_curve, Objective, TrainOutcome};

#[derive(Parser, Debug)]
#[command(name = "ane", version, about = "Acoustic neighbor embeddings")]
struct Cli {
    /// Worker threads for data-parallel work (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MetricArg {
    L2,
    Cosine,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::L2 => Metric::L2,
            MetricArg::Cosine => Metric::Cosine,
        }
    }
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Settings file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, required = true)]
    seed: Option<u64>,
    /// Embedding dimension (overrides `embed_dim`).
    #[arg(long)]
    dims: Option<usize>,
    /// Training corpus directory.
    #[arg(long, required = true)]
    train: Option<PathBuf>,
    /// Development corpus directory.
    #[arg(long, required = true)]
    dev: Option<PathBuf>,
    /// Output directory.
    #[arg(long, required = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic world and train/dev/test corpora.
    GenCorpus {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, required = true)]
        seed: Option<u64>,
        #[arg(long, required = true)]
        out: Option<PathBuf>,
    },
    /// Train the acoustic encoder f.
    TrainF(TrainArgs),
    /// Train the text encoder g by distillation from a trained f.
    TrainG {
        #[command(flatten)]
        args: TrainArgs,
        #[arg(long, required = true)]
        f_model: Option<PathBuf>,
    },
    /// Train f and g jointly with the cross-view triplet loss.
    TrainFg(TrainArgs),
    /// Write embeddings of a corpus (through f) or a lexicon (through g).
    Embed {
        #[arg(long, required = true)]
        model: Option<PathBuf>,
        #[arg(long, conflicts_with = "lexicon", required_unless_present = "lexicon")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, required = true)]
        out: Option<PathBuf>,
    },
    /// Embed a lexicon through g into a searchable index file.
    BuildIndex {
        #[arg(long, required = true)]
        g_model: Option<PathBuf>,
        #[arg(long, required = true)]
        lexicon: Option<PathBuf>,
        #[arg(long, required = true)]
        out: Option<PathBuf>,
    },
    /// Recognize one posteriorgram file against an index.
    Recognize {
        #[arg(long, required = true)]
        index: Option<PathBuf>,
        #[arg(long, required = true)]
        f_model: Option<PathBuf>,
        #[arg(long, required = true)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "l2")]
        metric: MetricArg,
        /// Number of candidates to print.
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
    /// Isolated-word recognition accuracy on a test corpus.
    EvalRecognition {
        #[arg(long, required = true)]
        f_model: Option<PathBuf>,
        #[arg(long, required = true)]
        g_model: Option<PathBuf>,
        #[arg(long, required = true)]
        lexicon: Option<PathBuf>,
        #[arg(long, required = true)]
        test: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "l2")]
        metric: MetricArg,
    },
    /// Acoustic word-discrimination average precision.
    EvalAp {
        #[arg(long, required = true)]
        f_model: Option<PathBuf>,
        #[arg(long, required = true)]
        corpus: Option<PathBuf>,
        /// Use only the first N utterances (all pairs are scored).
        #[arg(long)]
        max: Option<usize>,
        #[arg(long, value_enum, default_value = "l2")]
        metric: MetricArg,
    },
    /// Cross-view (f against g) word-discrimination average precision.
    EvalCrossview {
        #[arg(long, required = true)]
        f_model: Option<PathBuf>,
        #[arg(long, required = true)]
        g_model: Option<PathBuf>,
        #[arg(long, required = true)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        max: Option<usize>,
        #[arg(long, value_enum, default_value = "l2")]
        metric: MetricArg,
    },
    /// Match randomly edited lexicon pronunciations back to the lexicon through g.
    EvalNoisyMatch {
        #[arg(long, required = true)]
        g_model: Option<PathBuf>,
        #[arg(long, required = true)]
        lexicon: Option<PathBuf>,
        #[arg(long, required = true)]
        kernel: Option<PathBuf>,
        #[arg(long, required = true)]
        seed: Option<u64>,
        /// Per-phone edit probability.
        #[arg(long, default_value_t = 0.1)]
        rate: f64,
        #[arg(long, value_enum, default_value = "l2")]
        metric: MetricArg,
    },
    /// Distances between g-embeddings of transcription pairs.
    ///
    /// Pairs come from `--pairs` (one `a<TAB>b` line each, phones separated
    /// by spaces) or are sampled as confusable/distinct substitutions of
    /// lexicon words with `--lexicon`, `--kernel` and `--seed`.
    DistanceTable {
        #[arg(long, required = true)]
        g_model: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["lexicon", "kernel"], required_unless_present = "lexicon")]
        pairs: Option<PathBuf>,
        #[arg(long, requires_all = ["kernel", "seed"])]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        kernel: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of sampled words.
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Print the fully resolved configuration.
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

const SPLITS: [(&str, &str); 3] = [("train", "tr"), ("dev", "dv"), ("test", "te")];

fn mode() -> Parallelism {
    Parallelism::Parallel
}

fn req<T>(v: Option<T>) -> T {
    v.expect("required by the argument parser")
}

fn settings(base: Settings, args: &ConfigArgs) -> Result<Settings> {
    read_settings(base, args.config.as_deref(), &args.overrides)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn gen_corpus(cfg: &ConfigArgs, seed: u64, out: &Path) -> Result<()> {
    let mut s = settings(Settings::default(), cfg)?;
    s.world.seed = seed;
    let world = World::generate(&s.world)?;
    create_dir(out)?;
    write_lexicon_file(&out.join("lexicon.tsv"), &world.lexicon)?;
    write_file(&out.join("kernel.txt"), &world.kernel.to_text())?;
    write_file(&out.join("settings.cfg"), &format!("# seed = {seed}\n{}", s.to_text()))?;
    let totals = [s.train_utterances, s.dev_utterances, s.test_utterances];
    for (k, ((dir, prefix), total)) in SPLITS.iter().zip(totals).enumerate() {
        let synth = ane_core::corpus::SynthParams { rng_seed: rng::derive(seed, 100 + k as u64, 0), ..s.synth.clone() };
        let utts = sample_corpus(&world.lexicon, &world.kernel, world.inventory, &s.count_spec(total), &synth, prefix, mode())?;
        info!("{dir}: {} utterances", utts.len());
        write_corpus(&out.join(dir), &utts)?;
    }
    Ok(())
}

fn load_utts(dir: &Path) -> Result<Vec<Utterance>> {
    Ok(read_corpus(dir)?.utterances)
}

fn train_settings(args: &TrainArgs, objective: Objective) -> Result<Settings> {
    let mut base = Settings::default();
    base.train.objective = objective;
    let mut s = settings(base, &args.config)?;
    s.train.seed = req(args.seed);
    if let Some(d) = args.dims {
        s.train.embed_dim = d;
    }
    s.train.parallelism = mode();
    s.validate()?;
    Ok(s)
}

fn save_outcome(out: &Path, names: &[&str], outcome: &TrainOutcome) -> Result<()> {
    create_dir(out)?;
    for (name, params) in names.iter().zip(&outcome.params) {
        write_checkpoint(&out.join(format!("{name}.anem")), params)?;
    }
    write_file(&out.join("curve.csv"), &format_loss_curve(&outcome.curve))?;
    info!("best epoch {} dev {} after {} epochs", outcome.best_epoch, outcome.best_dev, outcome.epochs_run);
    Ok(())
}

fn text_dim(s: &Settings) -> Result<usize> {
    Ok(ane_core::corpus::PhoneInventory::new(s.world.phones, s.world.silence)?.text_dim())
}

fn load_lexicon(path: &Path, g: &ParameterSet) -> Result<Lexicon> {
    read_lexicon_file(path, g.config().input_dim)
}

fn format_vector(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\t")
}

fn head(mut utts: Vec<Utterance>, max: Option<usize>) -> Vec<Utterance> {
    if let Some(m) = max {
        utts.truncate(m);
    }
    utts
}

fn parse_pairs(text: &str) -> Result<Vec<(Transcription, Transcription)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| Error::InvalidArgument(format!("pairs line {}: {reason}", n + 1));
        let (a, b) = line.split_once('\t').ok_or_else(|| bad("expected two tab-separated transcriptions".into()))?;
        let a = parse_transcription(a).map_err(bad)?;
        let b = parse_transcription(b).map_err(bad)?;
        if a.is_empty() || b.is_empty() {
            return Err(bad("empty transcription".into()));
        }
        out.push((a, b));
    }
    Ok(out)
}

fn run(command: Command) -> Result<()> {
    let results = |rows: Vec<(String, String, f64)>| print!("{}", eval::format_results(&rows));
    match command {
        Command::GenCorpus { config, seed, out } => gen_corpus(&config, req(seed), &req(out))?,
        Command::TrainF(args) => {
            let s = train_settings(&args, Objective::AnePivot)?;
            let outcome = trainer::train_f(&s.train, &load_utts(&req(args.train))?, &load_utts(&req(args.dev))?)?;
            save_outcome(&req(args.out), &["f"], &outcome)?;
        }
        Command::TrainG { args, f_model } => {
            let s = train_settings(&args, Objective::DistillMse)?;
            let f = read_checkpoint(&req(f_model))?;
            let (train, dev) = (load_utts(&req(args.train))?, load_utts(&req(args.dev))?);
            let outcome = trainer::train_g_distill(&s.train, &f, text_dim(&s)?, &train, &dev)?;
            save_outcome(&req(args.out), &["g"], &outcome)?;
        }
        Command::TrainFg(args) => {
            let s = train_settings(&args, Objective::TripletMultiview)?;
            let (train, dev) = (load_utts(&req(args.train))?, load_utts(&req(args.dev))?);
            let outcome = trainer::train_fg_joint(&s.train, text_dim(&s)?, &train, &dev)?;
            save_outcome(&req(args.out), &["f", "g"], &outcome)?;
        }
        Command::Embed { model, corpus, lexicon, out } => {
            let params = read_checkpoint(&req(model))?;
            let (ids, emb) = match (corpus, lexicon) {
                (Some(dir), _) => {
                    let utts = load_utts(&dir)?;
                    (utts.iter().map(|u| u.id.clone()).collect::<Vec<_>>(), eval::embed_acoustic(&params, &utts, mode())?)
                }
                (None, Some(path)) => {
                    let lex = load_lexicon(&path, &params)?;
                    let ids = lex.entries().iter().map(|e| format!("{}\t{}", e.label, format_transcription(&e.pron))).collect();
                    let prons: Vec<_> = lex.entries().iter().map(|e| e.pron.clone()).collect();
                    (ids, eval::embed_text(&params, &prons, mode())?)
                }
                (None, None) => unreachable!("argument parser requires one input"),
            };
            let text: String = ids.iter().zip(&emb).map(|(id, v)| format!("{id}\t{}\n", format_vector(v))).collect();
            write_file(&req(out), &text)?;
        }
        Command::BuildIndex { g_model, lexicon, out } => {
            let g = read_checkpoint(&req(g_model))?;
            let lex = load_lexicon(&req(lexicon), &g)?;
            let index = eval::phonebook_index(&g, lex.entries(), mode())?;
            write_index(&req(out), &index)?;
        }
        Command::Recognize { index, f_model, input, metric, k } => {
            let index = read_index(&req(index))?;
            let f = read_checkpoint(&req(f_model))?;
            let x = read_posteriorgram(&req(input))?;
            let data = x.to_f64();
            let q = ane_core::encoder::encode(&f, Input::Dense { data: &data, dim: x.dim() })?;
            for m in index.top_k(&q, k, metric.into())? {
                println!("{}\t{}", index.label(m.entry), m.distance);
            }
        }
        Command::EvalRecognition { f_model, g_model, lexicon, test, metric } => {
            let f = read_checkpoint(&req(f_model))?;
            let g = read_checkpoint(&req(g_model))?;
            let lex = load_lexicon(&req(lexicon), &g)?;
            let test = load_utts(&req(test))?;
            let refs = test
                .iter()
                .map(|u| lex.label_of(&u.y).map(str::to_string).ok_or_else(|| Error::UnknownLabel(format_transcription(&u.y))))
                .collect::<Result<Vec<_>>>()?;
            let metric = Metric::from(metric);
            let acc = eval::eval_recognition(&f, &g, &test, &refs, lex.entries(), metric, mode())?;
            results(vec![
                ("accuracy".into(), metric.name().into(), acc.value()),
                ("correct".into(), metric.name().into(), acc.correct as f64),
                ("total".into(), metric.name().into(), acc.total as f64),
            ]);
        }
        Command::EvalAp { f_model, corpus, max, metric } => {
            let f = read_checkpoint(&req(f_model))?;
            let utts = head(load_utts(&req(corpus))?, max);
            let metric = Metric::from(metric);
            let ap = eval::eval_discrimination_ap(&f, &utts, metric, mode())?;
            results(vec![("ap".into(), metric.name().into(), ap)]);
        }
        Command::EvalCrossview { f_model, g_model, corpus, max, metric } => {
            let f = read_checkpoint(&req(f_model))?;
            let g = read_checkpoint(&req(g_model))?;
            let utts = head(load_utts(&req(corpus))?, max);
            let metric = Metric::from(metric);
            let ap = eval::eval_cross_view_ap(&f, &g, &utts, metric, mode())?;
            results(vec![("crossview-ap".into(), metric.name().into(), ap)]);
        }
        Command::EvalNoisyMatch { g_model, lexicon, kernel, seed, rate, metric } => {
            let g = read_checkpoint(&req(g_model))?;
            let lex = load_lexicon(&req(lexicon), &g)?;
            let kernel = ConfusionKernel::parse_text(&read_file(&req(kernel))?)?;
            let mut r = rng::stream(req(seed), rng::EVAL, 0);
            let metric = Metric::from(metric);
            let acc = eval::eval_noisy_text_match(&g, lex.entries(), lex.entries(), rate, &kernel, &mut r, metric, mode())?;
            results(vec![("noisy-match".into(), format!("{}:rate={rate}", metric.name()), acc.value())]);
        }
        Command::DistanceTable { g_model, pairs, lexicon, kernel, seed, count } => {
            let g = read_checkpoint(&req(g_model))?;
            let pairs = match pairs {
                Some(path) => parse_pairs(&read_file(&path)?)?,
                None => {
                    let lex = load_lexicon(&req(lexicon), &g)?;
                    let kernel = ConfusionKernel::parse_text(&read_file(&req(kernel))?)?;
                    let words: Vec<_> = lex.entries().iter().map(|e| e.pron.clone()).collect();
                    let mut r = rng::stream(req(seed), rng::EVAL, 1);
                    eval::confusability_triples(&words, &kernel, count, &mut r)?
                        .into_iter()
                        .flat_map(|t| [(t.word.clone(), t.confusable), (t.word, t.distinct)])
                        .collect()
                }
            };
            print!("{}", eval::format_distance_table(&eval::distance_table(&g, &pairs, mode())?));
        }
        Command::ValidateConfig { config } => {
            let s = settings(Settings::default(), &config)?;
            s.validate()?;
            print!("{}", s.to_text());
        }
    }
    Ok(())
}

fn init_workers(workers: Option<usize>) -> Result<()> {
    if workers == Some(0) {
        return Err(Error::InvalidArgument("--workers must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ANE_LOG", "error")).init();
    let cli = Cli::parse();
    match init_workers(cli.workers).and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
