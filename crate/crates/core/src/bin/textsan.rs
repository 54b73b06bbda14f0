//! Command-line front end: sanitize, score, sweep, desub, inspect.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use textsan::corpus::{parse_table_export, sanitize_corpus, Corpus, DecisionLine};
use textsan::eval;
use textsan::pipeline::{Invocation, Mode, TableScope};
use textsan::rng::RNG_ALGORITHM;
use textsan::substitution::reverse_apply;
use textsan::{load_backend, MlmBackend, SanitizeConfig};

#[derive(Parser, Debug)]
#[command(
    name = "textsan",
    about = "Word-level text sanitization with a masked-language-model probability filter",
    disable_version_flag = true
)]
struct Cli {
    /// Print tool, bundle, and RNG identities, then exit.
    #[arg(short = 'V', long, global = true)]
    version: bool,

    /// Model bundle directory (manifest.json inside).
    #[arg(long, global = true, value_name = "PATH")]
    bundle: Option<PathBuf>,

    /// TOML configuration file; command-line flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: ConfigFlags,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
struct ConfigFlags {
    /// Privacy threshold p; words with probability < p are flagged.
    #[arg(short = 'p', long, global = true)]
    threshold: Option<f64>,

    /// Candidates drawn from the masked distribution (n).
    #[arg(long, global = true)]
    top_n: Option<usize>,

    /// Shortlist size the replacement is drawn from (k).
    #[arg(long, global = true)]
    top_k: Option<usize>,

    /// Cosine-distance filter radius (s).
    #[arg(long, global = true)]
    radius: Option<f64>,

    /// Base seed for the deterministic RNG.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// redact: placeholder only; substitute: draw replacements.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,

    /// How flagged words are resolved against the backend.
    #[arg(long, global = true, value_enum)]
    invocation: Option<InvocationArg>,

    /// Condition each utterance on the preceding sanitized utterance.
    #[arg(long, global = true, overrides_with = "no_context")]
    context: bool,

    #[arg(long, global = true, overrides_with = "context")]
    no_context: bool,

    /// Substitution-table sharing: per_conversation or corpus.
    #[arg(long, global = true, value_enum)]
    table_scope: Option<TableScopeArg>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Redact,
    Substitute,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum InvocationArg {
    Separate,
    Simultaneous,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TableScopeArg {
    PerConversation,
    Corpus,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sanitize a dialogue corpus or plain-text file.
    Sanitize {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        output: PathBuf,
        /// Write the per-word decisions log (JSONL). The log contains the
        /// original sensitive surfaces: treat the file itself as sensitive.
        #[arg(long, value_name = "PATH")]
        decisions: Option<PathBuf>,
        /// Write the substitution-table export (JSON).
        #[arg(long, value_name = "PATH")]
        table: Option<PathBuf>,
        /// json: dialogue corpus; text: one utterance per line.
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Score a decisions log against metadata-derived gold labels.
    Score {
        /// Original (unsanitized) corpus with metadata, JSON.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Decisions log produced by `sanitize --decisions`.
        #[arg(long, value_name = "PATH")]
        decisions: PathBuf,
        /// Write the JSON report here in addition to stdout.
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
        /// Comma-separated metadata categories treated as sensitive.
        #[arg(long, value_name = "LIST")]
        categories: Option<String>,
    },
    /// Run a threshold sweep and print a recall/precision/F1 table.
    Sweep {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Comma-separated ascending thresholds, e.g. "1e-3,1e-2,1e-1".
        #[arg(long, value_name = "LIST")]
        thresholds: String,
        /// Write the JSON reports here in addition to the stdout table.
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
        #[arg(long, value_name = "LIST")]
        categories: Option<String>,
    },
    /// Reverse substitutions using an exported table.
    Desub {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        table: PathBuf,
        #[arg(long, value_name = "PATH")]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Print bundle and corpus summaries.
    Inspect {
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
}

/// File counterpart of the command-line flags; same keys, TOML syntax.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    threshold: Option<f64>,
    top_n: Option<usize>,
    top_k: Option<usize>,
    radius: Option<f64>,
    seed: Option<u64>,
    mode: Option<String>,
    invocation: Option<String>,
    context: Option<bool>,
    context_depth: Option<usize>,
    table_scope: Option<String>,
    bundle: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file_config = match &cli.config {
        Some(path) => {
            let data = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            toml::from_str::<FileConfig>(&data)
                .with_context(|| format!("invalid config file {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let bundle_path = cli.bundle.clone().or(file_config.bundle.clone());

    if cli.version {
        println!("textsan {}", env!("CARGO_PKG_VERSION"));
        println!("rng: {RNG_ALGORITHM}");
        match &bundle_path {
            Some(path) => {
                let backend = open_bundle(path)?;
                println!("bundle: {}", backend.identity());
            }
            None => println!("bundle: none"),
        }
        return Ok(ExitCode::SUCCESS);
    }

    let Some(command) = cli.command else {
        bail!("no command given; see --help");
    };

    let config = merge_config(&file_config, &cli.overrides)?;
    config.validate().map_err(anyhow::Error::msg)?;

    match command {
        Command::Sanitize {
            input,
            output,
            decisions,
            table,
            format,
        } => cmd_sanitize(
            &bundle_path, &config, &input, &output, decisions.as_deref(),
            table.as_deref(), format,
        ),
        Command::Score {
            input,
            decisions,
            output,
            categories,
        } => cmd_score(
            &bundle_path, &config, &input, &decisions, output.as_deref(), categories,
        ),
        Command::Sweep {
            input,
            thresholds,
            output,
            categories,
        } => cmd_sweep(
            &bundle_path, &input, &thresholds, output.as_deref(), categories,
        ),
        Command::Desub {
            input,
            table,
            output,
            format,
        } => cmd_desub(&input, &table, &output, format),
        Command::Inspect { input } => cmd_inspect(&bundle_path, input.as_deref()),
    }
}

fn merge_config(file: &FileConfig, flags: &ConfigFlags) -> Result<SanitizeConfig> {
    let mut config = SanitizeConfig::default();

    if let Some(v) = file.threshold {
        config.threshold_p = v;
    }
    if let Some(v) = file.top_n {
        config.params.n = v;
    }
    if let Some(v) = file.top_k {
        config.params.k = v;
    }
    if let Some(v) = file.radius {
        config.params.s = v;
    }
    if let Some(v) = file.seed {
        config.params.seed = v;
    }
    if let Some(v) = &file.mode {
        config.mode = parse_mode(v)?;
    }
    if let Some(v) = &file.invocation {
        config.invocation = parse_invocation(v)?;
    }
    if let Some(v) = file.context {
        config.use_context = v;
    }
    if let Some(v) = file.context_depth {
        config.context_depth = v;
    }
    if let Some(v) = &file.table_scope {
        config.table_scope = parse_table_scope(v)?;
    }

    if let Some(v) = flags.threshold {
        config.threshold_p = v;
    }
    if let Some(v) = flags.top_n {
        config.params.n = v;
    }
    if let Some(v) = flags.top_k {
        config.params.k = v;
    }
    if let Some(v) = flags.radius {
        config.params.s = v;
    }
    if let Some(v) = flags.seed {
        config.params.seed = v;
    }
    if let Some(v) = flags.mode {
        config.mode = match v {
            ModeArg::Redact => Mode::RedactOnly,
            ModeArg::Substitute => Mode::RedactAndSubstitute,
        };
    }
    if let Some(v) = flags.invocation {
        config.invocation = match v {
            InvocationArg::Separate => Invocation::Separate,
            InvocationArg::Simultaneous => Invocation::Simultaneous,
        };
    }
    if flags.context {
        config.use_context = true;
    }
    if flags.no_context {
        config.use_context = false;
    }
    if let Some(v) = flags.table_scope {
        config.table_scope = match v {
            TableScopeArg::PerConversation => TableScope::PerConversation,
            TableScopeArg::Corpus => TableScope::Corpus,
        };
    }
    Ok(config)
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "redact" => Ok(Mode::RedactOnly),
        "substitute" => Ok(Mode::RedactAndSubstitute),
        other => bail!("invalid mode {other:?}; expected redact or substitute"),
    }
}

fn parse_invocation(s: &str) -> Result<Invocation> {
    match s {
        "separate" => Ok(Invocation::Separate),
        "simultaneous" => Ok(Invocation::Simultaneous),
        other => bail!("invalid invocation {other:?}; expected separate or simultaneous"),
    }
}

fn parse_table_scope(s: &str) -> Result<TableScope> {
    match s {
        "per_conversation" => Ok(TableScope::PerConversation),
        "corpus" => Ok(TableScope::Corpus),
        other => bail!("invalid table_scope {other:?}; expected per_conversation or corpus"),
    }
}

fn open_bundle(path: &Path) -> Result<Arc<dyn MlmBackend>> {
    load_backend(path).with_context(|| format!("cannot load bundle {}", path.display()))
}

fn require_bundle(bundle: &Option<PathBuf>) -> Result<Arc<dyn MlmBackend>> {
    let path = bundle
        .as_deref()
        .context("a model bundle is required; pass --bundle PATH")?;
    open_bundle(path)
}

fn read_corpus(path: &Path, format: Format) -> Result<Corpus> {
    let data = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read input {}", path.display()))?;
    match format {
        Format::Json => {
            if data.trim().is_empty() {
                return Ok(Corpus {
                    conversations: vec![],
                });
            }
            Corpus::from_json(&data)
                .with_context(|| format!("input {} is not a dialogue corpus", path.display()))
        }
        Format::Text => {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "document".into());
            Ok(Corpus::from_plain_text(&id, &data))
        }
    }
}

fn write_corpus(path: &Path, corpus: &Corpus, format: Format) -> Result<()> {
    let data = match format {
        Format::Json => {
            let mut s = corpus.to_json();
            s.push('\n');
            s
        }
        Format::Text => corpus.to_plain_text(),
    };
    std::fs::write(path, data).with_context(|| format!("cannot write {}", path.display()))
}

fn parse_categories(arg: Option<String>) -> Vec<String> {
    match arg {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => eval::DEFAULT_CATEGORIES
            .iter()
            .map(|s| s.to_string())
            .collect(),
    }
}

fn parse_thresholds(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("invalid threshold {:?}", s.trim()))
        })
        .collect()
}

fn cmd_sanitize(
    bundle: &Option<PathBuf>,
    config: &SanitizeConfig,
    input: &Path,
    output: &Path,
    decisions: Option<&Path>,
    table: Option<&Path>,
    format: Format,
) -> Result<ExitCode> {
    let backend = require_bundle(bundle)?;
    let corpus = read_corpus(input, format)?;

    let run = sanitize_corpus(&corpus, config, backend.as_ref());

    write_corpus(output, &run.sanitized, format)?;
    if let Some(path) = decisions {
        std::fs::write(path, run.decisions_jsonl())
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = table {
        std::fs::write(path, run.tables_json(config.table_scope))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }

    if run.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        // Failure diagnostics stay free of word surfaces; details live in
        // the opt-in decisions log's sidecar below if requested.
        for f in &run.failures {
            eprintln!(
                "warning: conversation {} failed at turn {}; later turns dropped",
                f.conversation, f.turn
            );
        }
        eprintln!("{} conversation(s) partially sanitized", run.failures.len());
        Ok(ExitCode::from(2))
    }
}

fn cmd_score(
    bundle: &Option<PathBuf>,
    config: &SanitizeConfig,
    input: &Path,
    decisions_path: &Path,
    output: Option<&Path>,
    categories: Option<String>,
) -> Result<ExitCode> {
    let backend = require_bundle(bundle)?;
    let corpus = read_corpus(input, Format::Json)?;
    let data = std::fs::read_to_string(decisions_path)
        .with_context(|| format!("cannot read decisions {}", decisions_path.display()))?;
    let decisions: Vec<DecisionLine> = data
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).context("malformed decisions line"))
        .collect::<Result<_>>()?;
    let categories = parse_categories(categories);

    let report = eval::score(
        &corpus,
        &decisions,
        &categories,
        backend.vocab(),
        config.threshold_p,
    )?;
    let rendered = serde_json::to_string_pretty(&report)?;
    println!("{rendered}");
    if let Some(path) = output {
        std::fs::write(path, format!("{rendered}\n"))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(
    bundle: &Option<PathBuf>,
    input: &Path,
    thresholds: &str,
    output: Option<&Path>,
    categories: Option<String>,
) -> Result<ExitCode> {
    let backend = require_bundle(bundle)?;
    let corpus = read_corpus(input, Format::Json)?;
    let thresholds = parse_thresholds(thresholds)?;
    let categories = parse_categories(categories);

    let reports = eval::sweep(&corpus, backend.as_ref(), &categories, &thresholds)?;
    print!("{}", eval::render_table(&reports));
    if let Some(path) = output {
        let json = serde_json::to_string_pretty(&reports)?;
        std::fs::write(path, format!("{json}\n"))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_desub(input: &Path, table_path: &Path, output: &Path, format: Format) -> Result<ExitCode> {
    let corpus = read_corpus(input, format)?;
    let data = std::fs::read_to_string(table_path)
        .with_context(|| format!("cannot read table {}", table_path.display()))?;
    let tables: BTreeMap<String, _> = parse_table_export(&data)
        .with_context(|| format!("malformed table {}", table_path.display()))?;
    let shared = tables.get("");

    let mut recovered = corpus.clone();
    for conv in &mut recovered.conversations {
        let Some(table) = tables.get(&conv.id).or(shared) else {
            // no table for this conversation: nothing to reverse
            continue;
        };
        for turn in &mut conv.turns {
            turn.text = reverse_apply(&turn.text, table);
        }
    }
    write_corpus(output, &recovered, format)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect(bundle: &Option<PathBuf>, input: Option<&Path>) -> Result<ExitCode> {
    if let Some(path) = bundle {
        let backend = open_bundle(path)?;
        println!("bundle: {}", backend.identity());
        println!("vocab size: {}", backend.vocab().len());
        println!("max context length: {}", backend.max_context_len());
        println!("embedding dim: {}", backend.embedding_dim());
    } else {
        println!("bundle: none");
    }
    if let Some(path) = input {
        let corpus = read_corpus(path, Format::Json)?;
        let turns: usize = corpus.conversations.iter().map(|c| c.turns.len()).sum();
        println!("conversations: {}", corpus.conversations.len());
        println!("turns: {turns}");
        let mut categories: BTreeMap<&str, usize> = BTreeMap::new();
        for conv in &corpus.conversations {
            for (cat, values) in &conv.metadata {
                *categories.entry(cat.as_str()).or_default() += values.len();
            }
        }
        for (cat, count) in categories {
            println!("metadata {cat:?}: {count} value(s)");
        }
    }
    Ok(ExitCode::SUCCESS)
}
