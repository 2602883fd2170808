//! `linelist` subcommands. Each `cmd_*` returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use linelist_core::address::{
    name_tokens, GeocodeCache, GeocodeClient, GeocodeStatus, Gazetteer, Geocoder, StubGeocoder,
};
use linelist_core::anonymizer::AnonConfig;
use linelist_core::ingest::ingest_csv;
use linelist_core::report::{summarize, write_clean_csv, Report};
use linelist_core::review::{
    append_sidecar, load_sidecar, merge_sidecar, write_sidecar, Resolution, ReviewItem, Validator,
};
use linelist_core::synth::{default_specs, generate_corpus, specs_from_json, SynthOptions};
use linelist_core::{
    apply_resolutions, run_pipeline, CleanConfig, ColumnRole, ExecMode, Resources, YearContext,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_PENDING: i32 = 2;

pub const CLEAN_CSV: &str = "clean.csv";
pub const AUDIT_JSONL: &str = "audit.jsonl";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const PENDING_JSONL: &str = "pending_review.jsonl";
pub const CACHE_JSON: &str = "geocode_cache.json";

#[cfg(feature = "http-geocoder")]
const HTTP_TIMEOUT: Duration = Duration::from_secs(10);
const HTTP_MIN_INTERVAL: Duration = Duration::from_millis(100);

#[derive(Debug, Parser)]
#[command(name = "linelist", version, about = "Clean and review surveillance line-lists")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a raw line-list into analysis-ready outputs.
    Clean(CleanArgs),
    /// Resolve pending review items interactively.
    Review(ReviewArgs),
    /// Render a batch summary.
    Report(ReportArgs),
    /// Generate a synthetic messy line-list with ground truth.
    Synth(SynthArgs),
    /// Inspect or manage the geocode cache.
    GeocodeCache(CacheArgs),
}

#[derive(Debug, Args)]
pub struct GeocoderArgs {
    /// Use the offline stub geocoder, optionally backed by a JSON table.
    #[arg(long, value_name = "TABLE", num_args = 0..=1, require_equals = true)]
    pub offline_geocoder: Option<Option<PathBuf>>,
    /// Skip geocoding except for cache hits.
    #[arg(long, conflicts_with = "offline_geocoder")]
    pub no_geocode: bool,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub year: i32,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Sidecar with resolved review items to replay.
    #[arg(long)]
    pub resolutions_file: Option<PathBuf>,
    /// Gazetteer CSV; overrides the config and the bundled table.
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    /// Geocode cache to read and update; defaults to the output directory.
    #[arg(long)]
    pub geocode_cache: Option<PathBuf>,
    #[command(flatten)]
    pub geocoder: GeocoderArgs,
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    /// Pending-review sidecar written by `clean`.
    pub sidecar: PathBuf,
    /// Config used for the clean run, for its keywords and abbreviations.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// summary.json or the output directory containing it.
    pub summary: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub year: i32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    /// Ground-truth CSV.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// JSON list of renderer specs replacing the default weights.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct CacheArgs {
    #[arg(long)]
    pub cache: PathBuf,
    #[command(subcommand)]
    pub action: CacheAction,
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    List,
    Clear,
    /// Look up every query in a names file (one per line).
    Prewarm {
        #[arg(long)]
        names: PathBuf,
        #[command(flatten)]
        geocoder: GeocoderArgs,
    },
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Clean(a) => cmd_clean(&a),
        Command::Review(a) => cmd_review(&a),
        Command::Report(a) => cmd_report(&a, &mut io::stdout().lock()),
        Command::Synth(a) => cmd_synth(&a),
        Command::GeocodeCache(a) => cmd_geocode_cache(&a, &mut io::stdout().lock()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn load_config(path: &Path) -> anyhow::Result<CleanConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = CleanConfig::parse(&text).with_context(|| format!("config {}", path.display()))?;
    // Relative gazetteer paths are relative to the config file.
    if let Some(g) = cfg.gazetteer.as_mut() {
        if g.is_relative() {
            if let Some(dir) = path.parent() {
                *g = dir.join(&*g);
            }
        }
    }
    Ok(cfg)
}

fn load_gazetteer(flag: Option<&Path>, config: Option<&CleanConfig>) -> anyhow::Result<Gazetteer> {
    let path = flag.or_else(|| config.and_then(|c| c.gazetteer.as_deref()));
    match path {
        Some(p) => Gazetteer::load(p).with_context(|| format!("gazetteer {}", p.display())),
        None => Ok(Gazetteer::bundled()),
    }
}

fn geocode_client(args: &GeocoderArgs) -> anyhow::Result<Option<Box<dyn GeocodeClient>>> {
    if args.no_geocode {
        return Ok(None);
    }
    match &args.offline_geocoder {
        Some(Some(table)) => Ok(Some(Box::new(
            StubGeocoder::load(table).with_context(|| format!("stub table {}", table.display()))?,
        ))),
        Some(None) => Ok(Some(Box::new(StubGeocoder::synthetic()))),
        None => Ok(http_client()),
    }
}

#[cfg(feature = "http-geocoder")]
fn http_client() -> Option<Box<dyn GeocodeClient>> {
    linelist_core::address::HttpGeocoder::from_env(HTTP_TIMEOUT).map(|c| Box::new(c) as Box<dyn GeocodeClient>)
}

#[cfg(not(feature = "http-geocoder"))]
fn http_client() -> Option<Box<dyn GeocodeClient>> {
    None
}

fn build_geocoder(args: &GeocoderArgs, cache: GeocodeCache) -> anyhow::Result<Geocoder> {
    let offline = args.offline_geocoder.is_some();
    let client = geocode_client(args)?;
    let geocoder = Geocoder::new(client, cache);
    Ok(if offline || !geocoder.has_client() {
        geocoder
    } else {
        geocoder.with_min_interval(HTTP_MIN_INTERVAL)
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_clean(args: &CleanArgs) -> anyhow::Result<i32> {
    let config = load_config(&args.config)?;
    let ctx = YearContext::with_window(args.year, config.plausibility_window_days)?;
    let anon = AnonConfig::from_env(config.hash_cost, config.id_length, config.salt_scope.salt(args.year))?;
    let gazetteer = load_gazetteer(args.gazetteer.as_deref(), Some(&config))?;
    let resolutions = match &args.resolutions_file {
        Some(p) => Some(
            load_sidecar(p).with_context(|| format!("resolutions {}", p.display()))?,
        ),
        None => None,
    };
    let cache_path = args
        .geocode_cache
        .clone()
        .unwrap_or_else(|| args.output_dir.join(CACHE_JSON));
    let cache = GeocodeCache::load(&cache_path)?;
    let res = Resources {
        gazetteer,
        geocoder: build_geocoder(&args.geocoder, cache)?,
        anon,
        exec: ExecMode::with_workers(args.workers),
    };

    let ingested = ingest_csv(&args.input, &config.mapping)
        .with_context(|| format!("input {}", args.input.display()))?;
    let mut output = run_pipeline(&ingested, &ctx, &config, &res)?;
    if let Some(items) = resolutions {
        let applied = apply_resolutions(&mut output, &merge_sidecar(items), &config, &res)?;
        eprintln!(
            "resolutions: {} corrected, {} deleted, {} reopened, {} stale",
            applied.corrected, applied.deleted, applied.reopened, applied.stale
        );
    }

    fs::create_dir_all(&args.output_dir)
        .with_context(|| format!("creating {}", args.output_dir.display()))?;
    let dir = &args.output_dir;
    let mut buf = Vec::new();
    write_clean_csv(&output.records, &mut buf)?;
    write_file(&dir.join(CLEAN_CSV), &buf)?;
    buf.clear();
    output.audit.write_jsonl(&mut buf)?;
    write_file(&dir.join(AUDIT_JSONL), &buf)?;
    let report = summarize(&output.audit);
    write_file(&dir.join(SUMMARY_JSON), report.to_json()?.as_bytes())?;
    write_file(&dir.join(SUMMARY_TXT), report.to_text().as_bytes())?;
    buf.clear();
    write_sidecar(&mut buf, &output.review)?;
    write_file(&dir.join(PENDING_JSONL), &buf)?;
    res.geocoder.cache().save(&cache_path)?;

    let pending = output
        .review
        .iter()
        .filter(|i| !i.resolution.is_terminal())
        .count();
    eprintln!(
        "{} records, {} review items pending",
        output.records.len(),
        pending
    );
    Ok(if pending > 0 { EXIT_PENDING } else { EXIT_OK })
}

pub fn cmd_review(args: &ReviewArgs) -> anyhow::Result<i32> {
    let stdin = io::stdin();
    if !stdin.is_terminal() {
        bail!(
            "review needs an interactive terminal; for batch use pass a resolved sidecar to `clean --resolutions-file`"
        );
    }
    let config = args.config.as_deref().map(load_config).transpose()?;
    let gazetteer = load_gazetteer(args.gazetteer.as_deref(), config.as_ref())?;
    let defaults = config.unwrap_or_else(|| {
        CleanConfig::with_mapping(linelist_core::ColumnMapping::new(Vec::new()).expect("empty mapping"))
    });
    let validator = Validator {
        keywords: &defaults.sex_keywords,
        abbreviations: &defaults.abbreviations,
        gazetteer: &gazetteer,
    };
    let items = merge_sidecar(
        load_sidecar(&args.sidecar).with_context(|| format!("sidecar {}", args.sidecar.display()))?,
    );
    let session = review_session(&items, &validator, &mut stdin.lock(), &mut io::stdout().lock())?;
    if !session.resolved.is_empty() {
        append_sidecar(&args.sidecar, &session.resolved)?;
    }
    Ok(if session.remaining > 0 { EXIT_PENDING } else { EXIT_OK })
}

/// What an interactive session produced.
#[derive(Debug, Default)]
pub struct Session {
    /// Items that became terminal, to be appended to the sidecar.
    pub resolved: Vec<ReviewItem>,
    /// Items still pending afterwards.
    pub remaining: usize,
}

fn describe(out: &mut dyn Write, item: &ReviewItem, n: usize, total: usize) -> io::Result<()> {
    let v = &item.verdict;
    writeln!(out, "[{n}/{total}] row {} {}", v.row_index, v.role)?;
    writeln!(out, "  value: {:?}", v.before)?;
    writeln!(out, "  rules: {}", v.rule_id)?;
    if let Some(note) = &v.note {
        writeln!(out, "  note:  {note}")?;
    }
    if let Some(err) = &item.error {
        writeln!(out, "  last attempt rejected: {err}")?;
    }
    for (i, c) in item.candidates.iter().enumerate() {
        writeln!(out, "  {}) {c}", i + 1)?;
    }
    Ok(())
}

/// Runs the prompt loop over the pending items. Commands: a candidate
/// number, `v VALUE`, `d` (delete), `s` (skip), `q` (quit). Typed values are
/// validated before they are accepted.
pub fn review_session(
    items: &[ReviewItem],
    validator: &Validator<'_>,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> anyhow::Result<Session> {
    let pending: Vec<&ReviewItem> = items.iter().filter(|i| !i.resolution.is_terminal()).collect();
    let mut session = Session::default();
    let mut quit = false;
    for (n, item) in pending.iter().enumerate() {
        if quit {
            session.remaining += 1;
            continue;
        }
        describe(out, item, n + 1, pending.len())?;
        let malformed = item.verdict.role == ColumnRole::Other;
        let resolution = loop {
            if malformed {
                write!(out, "d delete, s skip, q quit> ")?;
            } else {
                write!(out, "number accept, v VALUE, d delete, s skip, q quit> ")?;
            }
            out.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                quit = true;
                break None;
            }
            let line = line.trim();
            match line {
                "q" => {
                    quit = true;
                    break None;
                }
                "s" | "" => break None,
                "d" => break Some(Resolution::Deleted),
                _ if malformed => writeln!(out, "  malformed rows can only be deleted")?,
                _ => {
                    if let Some(value) = line.strip_prefix("v ") {
                        match validator.check(item.verdict.role, value.trim()) {
                            Ok(_) => break Some(Resolution::ManualValue(value.trim().to_string())),
                            Err(e) => writeln!(out, "  invalid: {e}")?,
                        }
                    } else if let Ok(k) = line.parse::<usize>() {
                        match item.candidates.get(k.wrapping_sub(1)) {
                            Some(c) => break Some(Resolution::Accepted(c.clone())),
                            None => writeln!(out, "  no candidate {k}")?,
                        }
                    } else {
                        writeln!(out, "  unrecognized command {line:?}")?;
                    }
                }
            }
        };
        match resolution {
            Some(r) => {
                let mut item = (*item).clone();
                item.resolve(r)?;
                session.resolved.push(item);
            }
            None => session.remaining += 1,
        }
    }
    Ok(session)
}

pub fn read_report(path: &Path) -> anyhow::Result<Report> {
    let path = if path.is_dir() {
        path.join(SUMMARY_JSON)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Report::from_json(&text)?)
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let report = read_report(&args.summary)?;
    match args.format {
        ReportFormat::Text => out.write_all(report.to_text().as_bytes())?,
        ReportFormat::Json => out.write_all(report.to_json()?.as_bytes())?,
    }
    Ok(EXIT_OK)
}

pub fn cmd_synth(args: &SynthArgs) -> anyhow::Result<i32> {
    let gazetteer = load_gazetteer(args.gazetteer.as_deref(), None)?;
    let mut opts = SynthOptions::new(args.n, args.year, args.seed);
    opts.specs = match &args.weights {
        Some(p) => specs_from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => default_specs(),
    };
    let corpus = generate_corpus(&opts, &gazetteer, ExecMode::with_workers(args.workers))?;
    write_file(&args.output, corpus.csv.as_bytes())?;
    if let Some(t) = &args.truth {
        write_file(t, corpus.truth_csv()?.as_bytes())?;
    }
    Ok(EXIT_OK)
}

/// Normalizes a names-file line the way location queries are keyed.
fn query_key(line: &str) -> String {
    name_tokens(line).join(" ")
}

pub fn cmd_geocode_cache(args: &CacheArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let cache = GeocodeCache::load(&args.cache)?;
    match &args.action {
        CacheAction::List => {
            for (q, c) in cache.entries() {
                writeln!(out, "{q}\t{}\t{}", c.lat, c.lon)?;
            }
        }
        CacheAction::Clear => {
            if !cache.is_empty() {
                cache.clear();
                cache.save(&args.cache)?;
            }
        }
        CacheAction::Prewarm { names, geocoder } => {
            let text = fs::read_to_string(names).with_context(|| format!("reading {}", names.display()))?;
            let geocoder = build_geocoder(geocoder, cache)?;
            if !geocoder.has_client() {
                bail!("no geocoder configured; use --offline-geocoder or set the geocoder endpoint variable");
            }
            let (mut fetched, mut failed) = (0usize, 0usize);
            for line in text.lines() {
                let q = query_key(line);
                if q.is_empty() {
                    continue;
                }
                match geocoder.lookup(&q) {
                    GeocodeStatus::Fetched(_) => fetched += 1,
                    GeocodeStatus::CacheHit(_) => {}
                    status => {
                        failed += 1;
                        writeln!(out, "{q}\t{status:?}")?;
                    }
                }
            }
            geocoder.cache().save(&args.cache)?;
            writeln!(out, "fetched {fetched}, failed {failed}, cached {}", geocoder.cache().len())?;
        }
    }
    Ok(EXIT_OK)
}
