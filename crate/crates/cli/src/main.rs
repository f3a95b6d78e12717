use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use culturegen::corpusscan::{scan_corpus, DocFormat, PatternSet, ScanOptions, ScanOutcome};
use culturegen::pipeline::{Config, CorpusScanRequest, Pipeline, Stage, Workspace};
use culturegen::roster::Roster;
use culturegen::{Error, Result};

/// Culture-conditioned generation analysis over a resumable workspace.
///
/// Exit codes: 0 success, 1 validation or config error, 2 backend failure,
/// 3 partial completion (rerun to resume from the cache).
#[derive(Parser)]
#[command(name = "culturegen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct StageArgs {
    /// Workspace directory (created if missing).
    #[arg(short, long, default_value = "workspace")]
    workspace: PathBuf,
    /// Run configuration file (TOML).
    #[arg(short, long, default_value = "culturegen.toml")]
    config: PathBuf,
    /// Suppress progress output on stderr.
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample culture-conditioned generations.
    Generate(StageArgs),
    /// Sample culture-agnostic generations.
    GenerateAgnostic(StageArgs),
    /// Sample age and gender variants for the demographic cultures.
    GenerateDemographic(StageArgs),
    /// Extract candidate symbols from every generation set present.
    Extract(StageArgs),
    /// Score candidates against all cultures and assign culture symbols.
    Assign(StageArgs),
    /// Count vocabulary and parentheses markers.
    Mark(StageArgs),
    /// Diversity, overlap, correlation and ablation metrics.
    Metrics(StageArgs),
    /// Count culture and topic co-occurrences in a document corpus.
    ScanCorpus(ScanArgs),
    /// Write report CSVs and run metadata.
    Report(StageArgs),
    /// Run several stages in order (all but scan-corpus by default).
    Run(RunArgs),
    /// Show which stages have completed in a workspace.
    Status(StatusArgs),
    /// Print the corpus pattern set derived from a roster.
    Patterns(PatternsArgs),
}

#[derive(Args)]
struct ScanArgs {
    /// Corpus directory or single shard file.
    #[arg(long)]
    corpus: PathBuf,
    /// Document framing: lines or length-prefixed.
    #[arg(long, default_value = "lines")]
    format: DocFormat,
    /// Pattern set TOML; derived from the roster when absent.
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// Also write the counts CSV here (stdout with `-` in standalone mode).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Shards scanned concurrently.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Workspace to record the scan in; requires --config.
    #[arg(short, long, requires = "config")]
    workspace: Option<PathBuf>,
    #[arg(short, long, requires = "workspace")]
    config: Option<PathBuf>,
    /// Roster for standalone mode; the bundled roster when absent.
    #[arg(long, conflicts_with = "config")]
    roster: Option<PathBuf>,
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Stages to run, in order.
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<Stage>>,
}

#[derive(Args)]
struct StatusArgs {
    #[arg(short, long, default_value = "workspace")]
    workspace: PathBuf,
}

#[derive(Args)]
struct PatternsArgs {
    #[arg(long)]
    roster: Option<PathBuf>,
}

const DEFAULT_RUN: [Stage; 8] = [
    Stage::Generate,
    Stage::GenerateAgnostic,
    Stage::GenerateDemographic,
    Stage::Extract,
    Stage::Assign,
    Stage::Mark,
    Stage::Metrics,
    Stage::Report,
];

fn open(args: &StageArgs) -> Result<Pipeline> {
    let config = Config::load(&args.config)?;
    Ok(Pipeline::open(&args.workspace, config)?.quiet(args.quiet))
}

fn stage(args: &StageArgs, stage: Stage) -> Result<()> {
    open(args)?.run(stage)?;
    Ok(())
}

/// Continues past a capability error from `assign` so the remaining stages
/// can work from candidate symbols; that error is still returned at the end.
fn run_stages(args: &RunArgs) -> Result<()> {
    let p = open(&args.stage)?;
    let stages = args.stages.clone().unwrap_or_else(|| DEFAULT_RUN.to_vec());
    if stages.contains(&Stage::ScanCorpus) {
        return Err(Error::Usage(
            "scan-corpus needs --corpus; run it on its own".into(),
        ));
    }
    let mut deferred = None;
    for s in stages {
        match p.run(s) {
            Ok(_) => {}
            Err(e @ Error::Capability { .. }) if s == Stage::Assign => {
                if !args.stage.quiet {
                    eprintln!("[assign] {e}");
                    eprintln!("[assign] continuing with candidate symbols");
                }
                deferred = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    deferred.map_or(Ok(()), Err)
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if path == Path::new("-") {
        std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e))
    } else {
        culturegen::store::write_atomic(path, bytes)
    }
}

fn report_scan(outcome: &ScanOutcome, quiet: bool) {
    if quiet {
        return;
    }
    for w in &outcome.warnings {
        eprintln!("warning: skipped {}: {}", w.path.display(), w.message);
    }
    eprintln!(
        "scanned {} document(s), {} byte(s) in {} shard(s)",
        outcome.counts.docs_scanned, outcome.counts.bytes_scanned, outcome.shards_scanned
    );
}

fn scan(args: &ScanArgs) -> Result<()> {
    let options = ScanOptions {
        format: args.format,
        parallelism: args.parallelism.max(1),
        ..Default::default()
    };
    if let (Some(ws), Some(config)) = (&args.workspace, &args.config) {
        let p = Pipeline::open(ws, Config::load(config)?)?.quiet(args.quiet);
        let outcome = p.scan_corpus(&CorpusScanRequest {
            corpus: args.corpus.clone(),
            options,
            patterns: args.patterns.clone(),
        })?;
        report_scan(&outcome, args.quiet);
        if let Some(out) = &args.output {
            write_output(out, &outcome.counts.to_csv()?)?;
        }
        return Ok(());
    }
    let patterns = match (&args.patterns, &args.roster) {
        (Some(p), _) => PatternSet::load(p)?,
        (None, Some(r)) => PatternSet::from_roster(&Roster::load(r)?)?,
        (None, None) => PatternSet::from_roster(&Roster::bundled())?,
    };
    let output = args.output.as_deref().ok_or_else(|| {
        Error::Usage("standalone scan-corpus needs --output (or --workspace and --config)".into())
    })?;
    if !args.quiet {
        eprintln!(
            "scanning {} with {} pattern(s)",
            args.corpus.display(),
            patterns.pattern_count()
        );
    }
    let outcome = scan_corpus(&args.corpus, &patterns, &options)?;
    report_scan(&outcome, args.quiet);
    write_output(output, &outcome.counts.to_csv()?)
}

fn status(args: &StatusArgs) -> Result<()> {
    let ws = Workspace::new(&args.workspace)?;
    let manifest = ws.manifest()?;
    for s in Stage::ALL {
        match manifest.stages.get(&s) {
            Some(rec) => {
                let state = match ws.verify(s, rec) {
                    Ok(()) => "done",
                    Err(_) => "modified",
                };
                println!("{s:<22} {state:<9} {} output(s)", rec.outputs.len());
            }
            None => println!("{s:<22} pending"),
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => stage(&a, Stage::Generate),
        Command::GenerateAgnostic(a) => stage(&a, Stage::GenerateAgnostic),
        Command::GenerateDemographic(a) => stage(&a, Stage::GenerateDemographic),
        Command::Extract(a) => stage(&a, Stage::Extract),
        Command::Assign(a) => stage(&a, Stage::Assign),
        Command::Mark(a) => stage(&a, Stage::Mark),
        Command::Metrics(a) => stage(&a, Stage::Metrics),
        Command::Report(a) => stage(&a, Stage::Report),
        Command::ScanCorpus(a) => scan(&a),
        Command::Run(a) => run_stages(&a),
        Command::Status(a) => status(&a),
        Command::Patterns(a) => {
            let roster = match &a.roster {
                Some(r) => Roster::load(r)?,
                None => Roster::bundled(),
            };
            print!("{}", PatternSet::from_roster(&roster)?.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
