use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use pcrf_seg::corpus::{dataset_stats, load_segmented, CharMapping};
use pcrf_seg::decode::{BeamWidth, DecoderConfig, DecoderKind, Segmenter};
use pcrf_seg::emission::{
    load_emissions, train_perceptron_report, EmissionModel, TransitionMatrix,
};
use pcrf_seg::eval::{bench_throughput, dataset_distance, f1_score, SPEED_THRESHOLD_KB_PER_S};
use pcrf_seg::lm::{train_lm_with, LmTrainConfig, NGramLM};
use pcrf_seg::{normalize, Error};

const EXIT_RUNTIME: u8 = 2;
const EXIT_USAGE: u8 = 64;
/// Lines read and segmented together before being written out in order.
const SEGMENT_BLOCK: usize = 4096;

#[derive(Parser, Debug)]
#[command(
    name = "pcrf-seg",
    version,
    about = "Chinese word segmentation with CRF and LM-fused decoding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an n-gram language model on a space-segmented corpus and write ARPA.
    TrainLm(TrainLmArgs),
    /// Train the perceptron emission model on a space-segmented corpus.
    TrainTagger(TrainTaggerArgs),
    /// Segment raw text, one sentence per line.
    Segment(SegmentArgs),
    /// Score predicted segmentation against gold.
    Eval(EvalArgs),
    /// Measure segmentation throughput over a batch size and thread grid.
    Bench(BenchArgs),
    /// Corpus statistics and train/test label-consistency distance.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct TrainLmArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=5))]
    order: u8,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    min_count: u64,
    #[arg(long)]
    char_map: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainTaggerArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    char_map: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecoderArgs {
    #[arg(long, value_parser = parse_decoder, default_value = "crf")]
    decoder: DecoderKind,
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, value_parser = parse_beam, default_value = "8")]
    beam: BeamWidth,
    #[arg(long)]
    no_legality: bool,
}

#[derive(Args, Debug)]
struct SegmentArgs {
    /// Raw text; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, conflicts_with = "emissions")]
    model: Option<PathBuf>,
    /// Exchange-format emission matrices decoded in place of --model.
    #[arg(long)]
    emissions: Option<PathBuf>,
    /// Segmented corpus for transition estimates when decoding --emissions.
    #[arg(long, requires = "emissions")]
    train: Option<PathBuf>,
    #[command(flatten)]
    decoder: DecoderArgs,
    #[arg(long, env = "SEG_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    char_map: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    decoder: DecoderArgs,
    /// Comma-separated batch sizes.
    #[arg(long, value_delimiter = ',', default_value = "1,16,128")]
    batch: Vec<usize>,
    /// Comma-separated thread counts.
    #[arg(long, value_delimiter = ',', env = "SEG_THREADS")]
    threads: Vec<usize>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Segmented corpus to describe.
    #[arg(long, required_unless_present_any = ["train", "test"])]
    input: Option<PathBuf>,
    #[arg(long, requires = "test")]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    /// Include the per-word consistency table.
    #[arg(long)]
    per_word: bool,
}

fn parse_decoder(s: &str) -> Result<DecoderKind, String> {
    s.parse()
}

fn parse_beam(s: &str) -> Result<BeamWidth, String> {
    s.parse()
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::TrainLm(a) => train_lm_cmd(a),
        Command::TrainTagger(a) => train_tagger_cmd(a),
        Command::Segment(a) => segment_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Stats(a) => stats_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn load_mapping(path: Option<&Path>) -> CliResult<Option<CharMapping>> {
    Ok(path.map(CharMapping::load).transpose()?)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    let f = File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufWriter::new(f))
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Runtime(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn train_lm_cmd(a: TrainLmArgs) -> CliResult {
    let mapping = load_mapping(a.char_map.as_deref())?;
    let corpus = load_segmented(&a.input, mapping.as_ref())?;
    let words: Vec<Vec<String>> = corpus.iter().map(|s| s.words()).collect();
    let config = LmTrainConfig {
        order: usize::from(a.order),
        min_count: a.min_count as usize,
        ..LmTrainConfig::default()
    };
    let lm = train_lm_with(&words, &config)?;
    lm.save_arpa(&a.output)?;
    println!(
        "{}",
        serde_json::json!({
            "vocab_size": lm.vocab().len(),
            "ngram_counts": lm.ngram_counts(),
            "output": a.output,
        })
    );
    Ok(())
}

fn train_tagger_cmd(a: TrainTaggerArgs) -> CliResult {
    if a.epochs == 0 {
        return Err(usage("--epochs must be >= 1"));
    }
    let mapping = load_mapping(a.char_map.as_deref())?;
    let corpus = load_segmented(&a.input, mapping.as_ref())?;
    let (model, report) = train_perceptron_report(&corpus, a.epochs, a.seed)?;
    model.save(&a.output)?;
    println!(
        "{}",
        serde_json::json!({
            "sentences": corpus.len(),
            "epochs": a.epochs,
            "seed": a.seed,
            "features": model.feature_count(),
            "updates": report.updates,
            "train_accuracy": report.final_accuracy(),
        })
    );
    Ok(())
}

fn decoder_config(d: &DecoderArgs) -> CliResult<DecoderConfig> {
    if !(d.lambda.is_finite() && d.lambda >= 0.0) {
        return Err(usage(format!("--lambda must be >= 0, got {}", d.lambda)));
    }
    if d.decoder == DecoderKind::Pcrf && d.lm.is_none() {
        return Err(usage("--decoder pcrf requires --lm"));
    }
    let config = DecoderConfig {
        lambda: d.lambda,
        beam: d.beam,
        enforce_legality: !d.no_legality,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn load_lm(d: &DecoderArgs) -> CliResult<Option<NGramLM>> {
    // Only the PCRF decoder consults the language model.
    match (&d.lm, d.decoder) {
        (Some(path), DecoderKind::Pcrf) => Ok(Some(NGramLM::load_arpa(path)?)),
        _ => Ok(None),
    }
}

fn thread_pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    if threads == Some(0) {
        return Err(usage("--threads must be >= 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(Error::Config(format!("thread pool: {e}"))))
}

fn segment_cmd(a: SegmentArgs) -> CliResult {
    let config = decoder_config(&a.decoder)?;
    let pool = thread_pool(a.threads)?;
    let mut out: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let out_path = a
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("<stdout>"));

    if let Some(eef) = &a.emissions {
        let transitions = match &a.train {
            Some(train) => TransitionMatrix::estimate_mle(&load_segmented(train, None)?)?,
            None => TransitionMatrix::zeros(),
        };
        let lm = load_lm(&a.decoder)?;
        let segmenter = Segmenter::for_emissions(transitions, lm, a.decoder.decoder, config)?;
        let matrices = load_emissions(eef)?;
        let lines: Vec<String> = pool.install(|| {
            matrices
                .par_iter()
                .map(|m| segmenter.decode(m).map(|r| r.words.join(" ")))
                .collect::<Result<_, _>>()
        })?;
        for line in lines {
            writeln!(out, "{line}").map_err(|e| io_err(&out_path, e))?;
        }
        return out.flush().map_err(|e| io_err(&out_path, e));
    }

    let model_path = a
        .model
        .as_ref()
        .ok_or_else(|| usage("segment needs --model or --emissions"))?;
    let mapping = load_mapping(a.char_map.as_deref())?;
    let model = EmissionModel::load(model_path)?;
    let lm = load_lm(&a.decoder)?;
    let segmenter = Segmenter::new(model, lm, a.decoder.decoder, config)?;

    let in_path = a.input.clone().unwrap_or_else(|| PathBuf::from("<stdin>"));
    let reader: Box<dyn Read> = match &a.input {
        Some(p) => Box::new(File::open(p).map_err(|e| io_err(p, e))?),
        None => Box::new(io::stdin().lock()),
    };
    let mut reader = BufReader::new(reader);
    let mut line_no = 0usize;
    loop {
        let mut block: Vec<(usize, Vec<u8>)> = Vec::with_capacity(SEGMENT_BLOCK);
        while block.len() < SEGMENT_BLOCK {
            let mut buf = Vec::new();
            let n = reader
                .read_until(b'\n', &mut buf)
                .map_err(|e| io_err(&in_path, e))?;
            if n == 0 {
                break;
            }
            if buf.last() == Some(&b'\n') {
                buf.pop();
            }
            if buf.last() == Some(&b'\r') {
                buf.pop();
            }
            line_no += 1;
            block.push((line_no, buf));
        }
        if block.is_empty() {
            break;
        }
        let done = block.len() < SEGMENT_BLOCK;
        let lines: Vec<String> = pool.install(|| {
            block
                .par_iter()
                .map(|(no, raw)| segment_line(&segmenter, mapping.as_ref(), *no, raw))
                .collect()
        });
        for line in lines {
            writeln!(out, "{line}").map_err(|e| io_err(&out_path, e))?;
        }
        if done {
            break;
        }
    }
    out.flush().map_err(|e| io_err(&out_path, e))
}

/// Segmented line, or the input echoed back when it cannot be segmented.
fn segment_line(
    segmenter: &Segmenter,
    mapping: Option<&CharMapping>,
    line_no: usize,
    raw: &[u8],
) -> String {
    let text = match std::str::from_utf8(raw) {
        Ok(t) => t,
        Err(_) => {
            log::warn!("line {line_no}: invalid UTF-8, echoed unsegmented");
            return String::from_utf8_lossy(raw).into_owned();
        }
    };
    let mapped;
    let input = match mapping {
        Some(m) => {
            mapped = m.apply(text);
            mapped.as_str()
        }
        None => text,
    };
    match segmenter.segment(input) {
        Ok(words) => words.join(" "),
        Err(e) => {
            log::warn!("line {line_no}: {e}, echoed unsegmented");
            text.to_string()
        }
    }
}

fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let mut lines = Vec::new();
    for (i, raw) in text.split(|&b| b == b'\n').enumerate() {
        let s = std::str::from_utf8(raw).map_err(|_| Error::Utf8 { line: i + 1 })?;
        lines.push(s.strip_suffix('\r').unwrap_or(s).to_string());
    }
    if text.ends_with(b"\n") {
        lines.pop();
    }
    Ok(lines)
}

fn split_words(line: &str) -> Vec<String> {
    normalize(line)
        .split(' ')
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn eval_cmd(a: EvalArgs) -> CliResult {
    let gold: Vec<Vec<String>> = read_lines(&a.gold)?
        .iter()
        .map(|l| split_words(l))
        .collect();
    let pred: Vec<Vec<String>> = read_lines(&a.pred)?
        .iter()
        .map(|l| split_words(l))
        .collect();
    let report = f1_score(&gold, &pred).map_err(|e| match e {
        Error::LengthMismatch { sentence_index } => CliError::Runtime(Error::Config(format!(
            "line {}: gold and predicted text differ",
            sentence_index + 1
        ))),
        other => CliError::Runtime(other),
    })?;
    println!("{}", report.to_json());
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> CliResult {
    let config = decoder_config(&a.decoder)?;
    if a.batch.is_empty() || a.batch.contains(&0) {
        return Err(usage("--batch sizes must be >= 1"));
    }
    if a.threads.contains(&0) {
        return Err(usage("--threads must be >= 1"));
    }
    let threads = if a.threads.is_empty() {
        vec![std::thread::available_parallelism().map_or(1, |n| n.get())]
    } else {
        a.threads.clone()
    };
    let model = EmissionModel::load(&a.model)?;
    let lm = load_lm(&a.decoder)?;
    let segmenter = Segmenter::new(model, lm, a.decoder.decoder, config)?;
    let corpus: Vec<String> = read_lines(&a.input)?
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .collect();
    let mut best = 0.0f64;
    for &t in &threads {
        for &b in &a.batch {
            let report = bench_throughput(&segmenter, &corpus, b, t)?;
            best = best.max(report.kb_per_s);
            println!("{}", report.to_json());
        }
    }
    let verdict = if best >= SPEED_THRESHOLD_KB_PER_S {
        "pass"
    } else {
        "fail"
    };
    println!(
        "summary: best {best:.1} KB/s vs {SPEED_THRESHOLD_KB_PER_S} KB/s threshold: {verdict} (decoder {})",
        a.decoder.decoder
    );
    Ok(())
}

fn stats_cmd(a: StatsArgs) -> CliResult {
    let describe = |path: &Path| -> CliResult {
        let corpus = load_segmented(path, None)?;
        let stats = dataset_stats(&corpus)?;
        let mut record = serde_json::to_value(stats).expect("plain record");
        record["corpus"] = serde_json::json!(path);
        println!("{record}");
        Ok(())
    };
    for path in [&a.input, &a.train, &a.test].into_iter().flatten() {
        describe(path)?;
    }
    if let (Some(train), Some(test)) = (&a.train, &a.test) {
        let train: Vec<Vec<String>> = load_segmented(train, None)?
            .iter()
            .map(|s| s.words())
            .collect();
        let test: Vec<Vec<String>> = load_segmented(test, None)?
            .iter()
            .map(|s| s.words())
            .collect();
        let report = dataset_distance(&train, &test)?;
        let mut record = serde_json::json!({
            "mean_consistency": report.mean_consistency,
            "oov_rate": report.oov_rate,
            "test_tokens": report.test_tokens,
        });
        if a.per_word {
            record["per_word"] = serde_json::to_value(&report.per_word).expect("plain record");
        }
        println!("{record}");
    }
    Ok(())
}
