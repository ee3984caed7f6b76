use std::fmt::Debug;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use affordance_grpo::config::{snapshot, ConfigError, ConfigMap};
use affordance_grpo::dataset::{self, DatasetError, ReadMode};
use affordance_grpo::metrics::{self, MetricError};
use affordance_grpo::pgm::{self, PgmError};
use affordance_grpo::reward::{score_response, Component, EmbeddingLexicon, LexiconError};
use affordance_grpo::toy::{self, Difficulty, ToyError, ToyTrainConfig, FEATURE_NAMES};

#[derive(Parser)]
#[command(
    name = "affgrpo",
    version,
    about = "Reward scoring, toy GRPO training, evaluation and dataset conversion"
)]
struct Cli {
    /// Suppress progress and summary lines on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score responses against ground-truth records, one breakdown per line.
    Score(ScoreArgs),
    /// Train the softmax policy on synthetic scenes with GRPO.
    TrainToy(TrainArgs),
    /// Compute mask metrics for a manifest of prediction/ground-truth pairs.
    Eval(EvalArgs),
    /// Build a record file from a directory of masks and instructions.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct ScoreArgs {
    /// One response per line: raw text, a JSON string, or {"response": ...}.
    #[arg(long)]
    responses: PathBuf,
    /// JSONL records; line i of the responses is scored against record i.
    #[arg(long)]
    records: PathBuf,
    /// Embedding table: first line is the dimension, then `token v1 .. vd`.
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Re-derive boxes and centroids from masks next to the records file.
    #[arg(long)]
    strict: bool,
    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    difficulty: Option<Difficulty>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Disable a reward component (repeatable).
    #[arg(long = "disable", value_name = "COMPONENT")]
    disable: Vec<Component>,
    /// Output directory for stats.jsonl, theta.txt and config.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Tab-separated `id  pred.pgm  gt.pgm`; paths relative to the manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Summary report; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-pair JSONL details.
    #[arg(long)]
    details: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Config(ConfigError),
    Dataset(DatasetError),
    Lexicon(LexiconError),
    Metric(MetricError),
    Pgm(PgmError),
    Toy(ToyError),
    Io { path: PathBuf, source: io::Error },
    Input(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}
impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Dataset(e)
    }
}
impl From<LexiconError> for CliError {
    fn from(e: LexiconError) -> Self {
        CliError::Lexicon(e)
    }
}
impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Metric(e)
    }
}
impl From<PgmError> for CliError {
    fn from(e: PgmError) -> Self {
        CliError::Pgm(e)
    }
}
impl From<ToyError> for CliError {
    fn from(e: ToyError) -> Self {
        CliError::Toy(e)
    }
}

/// Leading identifier of a Debug rendering, i.e. the variant name.
fn variant<T: Debug>(v: &T) -> String {
    format!("{v:?}")
        .chars()
        .take_while(|c| c.is_alphanumeric() || *c == '_')
        .collect()
}

impl CliError {
    fn name(&self) -> String {
        match self {
            CliError::Config(e) => format!("ConfigError::{}", variant(e)),
            CliError::Dataset(e) => format!("DatasetError::{}", variant(e)),
            CliError::Lexicon(e) => format!("LexiconError::{}", variant(e)),
            CliError::Metric(e) => format!("MetricError::{}", variant(e)),
            CliError::Pgm(e) => format!("PgmError::{}", variant(e)),
            CliError::Toy(e) => format!("ToyError::{}", variant(e)),
            CliError::Io { .. } => "IoError".into(),
            CliError::Input(_) => "InputError".into(),
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(e) => e.to_string(),
            CliError::Dataset(e) => e.to_string(),
            CliError::Lexicon(e) => e.to_string(),
            CliError::Metric(e) => e.to_string(),
            CliError::Pgm(e) => e.to_string(),
            CliError::Toy(e) => e.to_string(),
            CliError::Io { path, source } => format!("{}: {source}", path.display()),
            CliError::Input(m) => m.clone(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, content).map_err(io_err(p)),
        None => io::stdout()
            .lock()
            .write_all(content.as_bytes())
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

fn base_config(path: Option<&Path>, difficulty: Difficulty) -> Result<ToyTrainConfig, CliError> {
    let mut cfg = ToyTrainConfig::for_difficulty(difficulty);
    if let Some(p) = path {
        let map = ConfigMap::load(p)?;
        // difficulty picks the defaults, so apply it before anything else
        if let Some(d) = map.get("difficulty") {
            cfg = ToyTrainConfig::for_difficulty(d.parse().map_err(|m| {
                CliError::Config(ConfigError::BadValue {
                    key: "difficulty".into(),
                    message: m,
                })
            })?);
        }
        map.apply(&mut cfg)?;
    }
    Ok(cfg)
}

fn response_text(line: &str) -> String {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::String(s)) => s,
        Ok(Value::Object(o)) => match o.get("response") {
            Some(Value::String(s)) => s.clone(),
            _ => line.to_string(),
        },
        _ => line.to_string(),
    }
}

fn run_score(a: &ScoreArgs) -> Result<(), CliError> {
    let cfg = base_config(a.config.as_deref(), Difficulty::Easy)?;
    cfg.reward
        .validate()
        .map_err(|e| CliError::Toy(ToyError::Reward(e)))?;
    let mode = if a.strict {
        ReadMode::Strict {
            mask_root: a
                .records
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default(),
        }
    } else {
        ReadMode::Lenient
    };
    let records = dataset::read_records(&a.records, &mode)?;
    let lexicon = EmbeddingLexicon::load(&a.lexicon)?;
    let text = fs::read_to_string(&a.responses).map_err(io_err(&a.responses))?;
    let responses: Vec<String> = text.lines().map(response_text).collect();
    if responses.len() != records.len() {
        return Err(CliError::Input(format!(
            "{} responses but {} records",
            responses.len(),
            records.len()
        )));
    }

    let mut out = String::new();
    for (i, (resp, rec)) in responses.iter().zip(&records).enumerate() {
        let b = score_response(resp, &rec.ground_truth(), &lexicon, &cfg.reward);
        let mut v = serde_json::to_value(&b).expect("breakdown serializes");
        if let Value::Object(m) = &mut v {
            m.insert("index".into(), i.into());
            m.insert("id".into(), rec.id.clone().into());
        }
        out.push_str(&v.to_string());
        out.push('\n');
    }
    write_output(a.out.as_deref(), &out)
}

fn run_train(a: &TrainArgs, quiet: bool) -> Result<(), CliError> {
    let mut cfg = base_config(
        a.config.as_deref(),
        a.difficulty.unwrap_or(Difficulty::Easy),
    )?;
    if let Some(d) = a.difficulty {
        cfg.difficulty = d;
    }
    if let Some(s) = a.seed {
        cfg.grpo.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.grpo.steps = s;
    }
    for c in &a.disable {
        cfg.reward.set_enabled(*c, false);
    }

    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let config_path = a.out.join("config.txt");
    fs::write(&config_path, snapshot(&cfg)).map_err(io_err(&config_path))?;

    let stats_path = a.out.join("stats.jsonl");
    let file = fs::File::create(&stats_path).map_err(io_err(&stats_path))?;
    let mut w = io::BufWriter::new(file);
    let mut write_err = None;
    let total = cfg.grpo.steps;
    let result = toy::train_toy(&cfg, |rec| {
        if write_err.is_some() {
            return;
        }
        let line = serde_json::to_string(rec).expect("stats serialize");
        if let Err(e) = writeln!(w, "{line}") {
            write_err = Some(e);
        }
        if !quiet && (rec.step + 1) % 100 == 0 {
            eprintln!(
                "step {}/{}: expected reward {:.4}, sampled {:.4}",
                rec.step + 1,
                total,
                rec.expected_reward,
                rec.mean_reward
            );
        }
    })?;
    if let Some(e) = write_err {
        return Err(io_err(&stats_path)(e));
    }
    w.flush().map_err(io_err(&stats_path))?;

    let theta_path = a.out.join("theta.txt");
    let mut theta = format!("# {}\n", FEATURE_NAMES.join(" "));
    let values: Vec<String> = result.theta.iter().map(|t| format!("{t:?}")).collect();
    theta.push_str(&values.join(" "));
    theta.push('\n');
    fs::write(&theta_path, theta).map_err(io_err(&theta_path))?;

    let summary_path = a.out.join("summary.json");
    let summary = serde_json::json!({
        "initial_expected_reward": result.initial_expected_reward,
        "final_expected_reward": result.final_expected_reward(),
        "max_reward": result.max_reward,
        "initial_count_accuracy": result.initial_count_accuracy,
        "final_count_accuracy": result.final_count_accuracy(),
        "steps": result.steps.len(),
    });
    fs::write(&summary_path, format!("{summary}\n")).map_err(io_err(&summary_path))?;

    if !quiet {
        eprintln!(
            "expected reward {:.4} -> {:.4} (max {:.4}); count accuracy {:.4} -> {:.4}",
            result.initial_expected_reward,
            result.final_expected_reward(),
            result.max_reward,
            result.initial_count_accuracy,
            result.final_count_accuracy()
        );
    }
    Ok(())
}

fn run_eval(a: &EvalArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.manifest).map_err(io_err(&a.manifest))?;
    let root = a
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut details = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(CliError::Input(format!(
                "manifest line {}: expected 3 tab-separated columns, got {}",
                i + 1,
                cols.len()
            )));
        }
        let pred_path = root.join(cols[1]);
        let pred_bytes = fs::read(&pred_path).map_err(io_err(&pred_path))?;
        let pred_mask = pgm::decode_mask(&pred_bytes)?;
        let pred_map = pgm::decode_intensity(&pred_bytes)?;
        let gt = pgm::read_mask(root.join(cols[2]))?;
        details.push(metrics::evaluate_pair(cols[0], &pred_mask, &pred_map, &gt)?);
    }
    let summary = metrics::summarize(&details)?;
    if let Some(p) = &a.details {
        let mut out = String::new();
        for d in &details {
            out.push_str(&serde_json::to_string(d).expect("details serialize"));
            out.push('\n');
        }
        write_output(Some(p), &out)?;
    }
    write_output(a.out.as_deref(), &summary.to_report())
}

fn run_convert(a: &ConvertArgs, quiet: bool) -> Result<(), CliError> {
    let records = dataset::convert_directory(&a.input)?;
    dataset::write_records(&a.out, &records)?;
    if !quiet {
        eprintln!("wrote {} records to {}", records.len(), a.out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Score(a) => run_score(a),
        Command::TrainToy(a) => run_train(a, cli.quiet),
        Command::Eval(a) => run_eval(a),
        Command::Convert(a) => run_convert(a, cli.quiet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.name(), e.message());
            ExitCode::from(1)
        }
    }
}
