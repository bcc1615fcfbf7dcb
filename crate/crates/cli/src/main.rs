use std::collections::HashMap;
use std::error::Error;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use aurora_core::analytics::{
    build_design, fit_logit, fit_nb, fit_ordinal, odds_ratio, sessionize_and_filter, AnalyticsConfig, Formula,
    References,
};
use aurora_core::bot::{
    compose_location_digests, plan_cycle, publish_all, BotConfig, BotPost, FileSink, Tokenizer, Transport,
};
use aurora_core::centrality::{build_interaction_graph, expected_graph, permutation_test};
use aurora_core::diversity::{select_div, select_pm, select_pop, FilterConfig};
use aurora_core::events::replay_path;
use aurora_core::ingestion::{ingest_records, parse_post_stream, AdmissionGate, AdmissionPolicy};
use aurora_core::issue::{trailing_pool, Issue};
use aurora_core::layout::{layout_issue, Rect, Transform, WeightSpec};
use aurora_core::{BotError, Gazetteer, LocationRegistry, Method, MicroPost, PopulationTable, Timeline};
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

type CliResult<T = ()> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "aurora", version, about = "Diversity-aware micro-blog timelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate, geolocate and admit raw posts from a JSON Lines corpus.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// `code,name` CSV.
        #[arg(long)]
        registry: PathBuf,
        /// `alias,code` CSV.
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        /// TOML admission policy.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Admitted posts as JSON Lines.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build timelines from admitted posts.
    Filter {
        #[arg(long)]
        posts: PathBuf,
        /// End of the pool window; defaults to just after the newest post.
        #[arg(long)]
        now: Option<DateTime<Utc>>,
        #[arg(long, default_value_t = 6 * 3600)]
        window_secs: i64,
        #[arg(long, default_value_t = 30)]
        size: usize,
        #[arg(long, default_value_t = 5)]
        turns: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = MethodArg::All)]
        method: MethodArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Observed versus population-expected random-walk betweenness.
    Centrality {
        #[arg(long)]
        posts: PathBuf,
        /// `code,share` CSV.
        #[arg(long)]
        population: PathBuf,
        /// Permutation rounds; 0 skips the test.
        #[arg(long, default_value_t = 0)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Treemap geometry for a timeline.
    Layout {
        /// Timeline JSON.
        #[arg(long)]
        timeline: PathBuf,
        #[arg(long)]
        population: PathBuf,
        #[arg(long, default_value_t = 1280.0)]
        width: f64,
        #[arg(long, default_value_t = 720.0)]
        height: f64,
        /// Reference instant for recency; defaults to the timeline window end.
        #[arg(long)]
        now: Option<DateTime<Utc>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a regression on users reconstructed from an event log.
    Analyze {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        /// For example `distinct_locations ~ C(condition) * C(location)`.
        #[arg(long)]
        formula: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan bot posts for an issue and publish them.
    Bot {
        /// TOML bot configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Issue JSON.
        #[arg(long)]
        issue: PathBuf,
        /// Posts of the last hour, for location digests.
        #[arg(long, requires = "digest_at")]
        hour_posts: Option<PathBuf>,
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Digest instant; must fall on the digest minute.
        #[arg(long)]
        digest_at: Option<DateTime<Utc>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write posts to this JSON Lines file instead of publishing.
        #[arg(long, conflicts_with = "endpoint")]
        dry_run: Option<PathBuf>,
        /// Stub endpoint receiving each post as a JSON POST.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 2)]
        retries: usize,
    },
    /// Run the issue service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pop,
    Div,
    Pm,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Ordinal,
    Nb,
    Logit,
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Ingest { corpus, registry, gazetteer, policy, out } => ingest(&corpus, &registry, gazetteer, policy, &out),
        Command::Filter { posts, now, window_secs, size, turns, seed, method, out } => {
            let posts = read_posts(&posts)?;
            let now = now.unwrap_or_else(|| default_now(&posts));
            let pool = trailing_pool(&posts, now, window_secs);
            let config = FilterConfig { size, turns, seed, ..FilterConfig::default() };
            config.validate()?;
            let timelines: std::collections::BTreeMap<Method, Timeline> = match method {
                MethodArg::All => aurora_core::diversity::generate_all(&pool, &config)?,
                MethodArg::Pop => [(Method::Pop, select_pop(&pool, &config)?)].into(),
                MethodArg::Div => [(Method::Div, select_div(&pool, &config)?)].into(),
                MethodArg::Pm => [(Method::Pm, select_pm(&pool, &config)?)].into(),
            };
            write_json(out.as_deref(), &timelines)
        }
        Command::Centrality { posts, population, rounds, seed, out } => {
            let posts = read_posts(&posts)?;
            let population = PopulationTable::from_csv_path(&population, None)?;
            let registry = population.registry()?;
            let counted = build_interaction_graph(&posts, &registry, &HashMap::new());
            if counted.unresolved > 0 {
                tracing::warn!(unresolved = counted.unresolved, "interactions with unlocated authors skipped");
            }
            let expected = expected_graph(&population, counted.graph.total_weight())?;
            let report = permutation_test(&counted.graph, &expected, rounds, seed)?;
            write_json(out.as_deref(), &report)
        }
        Command::Layout { timeline, population, width, height, now, out } => {
            let timeline: Timeline = serde_json::from_reader(BufReader::new(File::open(&timeline)?))?;
            let population = PopulationTable::from_csv_path(&population, None)?;
            let registry = population.registry()?;
            let spec = WeightSpec {
                retweet_term: Transform::Linear,
                connectivity_term: Transform::Log10,
                population,
            };
            let now = now.unwrap_or(timeline.source_window.end);
            let tree = layout_issue(&timeline, Rect::new(0.0, 0.0, width, height)?, &spec, &registry, now)?;
            write_json(out.as_deref(), &tree)
        }
        Command::Analyze { events, registry, model, formula, out } => analyze(&events, &registry, model, &formula, out),
        Command::Bot { config, issue, hour_posts, registry, digest_at, seed, dry_run, endpoint, retries } => {
            let config: BotConfig = match config {
                Some(p) => toml::from_str(&std::fs::read_to_string(p)?)?,
                None => BotConfig::default(),
            };
            config.validate()?;
            let issue: Issue = serde_json::from_reader(BufReader::new(File::open(&issue)?))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut posts = plan_cycle(&issue, &config, &mut rng);
            if let (Some(path), Some(at)) = (hour_posts, digest_at) {
                let registry = match registry {
                    Some(p) => LocationRegistry::from_csv_path(p)?,
                    None => return Err("--hour-posts needs --registry".into()),
                };
                let batch =
                    compose_location_digests(&read_posts(&path)?, &registry, &Tokenizer::spanish(), &config, at)?;
                posts.extend(batch.posts);
            }
            let published = match (dry_run, endpoint) {
                (Some(path), _) => publish_all(&mut FileSink::create(path)?, &posts, retries)?,
                (None, Some(url)) => publish_all(&mut HttpTransport::new(url), &posts, retries)?,
                (None, None) => return Err("pass --dry-run FILE or --endpoint URL".into()),
            };
            eprintln!("published {published} posts");
            Ok(())
        }
        Command::Serve { config } => {
            let cfg = aurora_service::ServiceConfig::from_path(config)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(aurora_service::serve(cfg))?;
            Ok(())
        }
    }
}

fn ingest(
    corpus: &Path,
    registry: &Path,
    gazetteer: Option<PathBuf>,
    policy: Option<PathBuf>,
    out: &Path,
) -> CliResult {
    let registry = LocationRegistry::from_csv_path(registry)?;
    let gazetteer = match gazetteer {
        Some(p) => Gazetteer::from_csv_path(p, Some(&registry))?,
        None => Gazetteer::new(),
    };
    let policy: AdmissionPolicy = match policy {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?)?,
        None => AdmissionPolicy::default(),
    };
    policy.validate()?;
    let parsed = parse_post_stream(BufReader::new(File::open(corpus)?))?;
    let report = ingest_records(&parsed.records, &registry, &gazetteer, &mut AdmissionGate::new(policy));
    let mut w = BufWriter::new(File::create(out)?);
    for post in &report.admitted {
        serde_json::to_writer(&mut w, post)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let summary = serde_json::json!({
        "records": parsed.records.len(),
        "malformed": parsed.skipped,
        "admitted": report.admitted.len(),
        "invalid": report.invalid,
        "rejected": report.rejected,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn analyze(events: &Path, registry: &Path, model: ModelArg, formula: &str, out: Option<PathBuf>) -> CliResult {
    let registry = LocationRegistry::from_csv_path(registry)?;
    let replay = replay_path(events)?;
    if replay.corrupt > 0 {
        tracing::warn!(lines = replay.corrupt, "unparsable event lines skipped");
    }
    let table = sessionize_and_filter(&replay.events, &registry, &AnalyticsConfig::default());
    let formula = Formula::parse(formula)?;
    let design = build_design(&table.frame()?, &formula, &References::default())?;
    let response = formula.response.as_deref().ok_or("formula needs a response: `y ~ terms`")?;
    let y = table.response(response)?;
    let fit = match model {
        ModelArg::Ordinal => {
            let levels: Vec<u64> = y.iter().map(|v| *v as u64).collect();
            fit_ordinal(&levels, &design)?
        }
        ModelArg::Nb => fit_nb(&y, &design)?,
        ModelArg::Logit => fit_logit(&y, &design, None)?,
    };
    let odds: Option<std::collections::BTreeMap<String, aurora_core::analytics::OddsRatio>> = match model {
        ModelArg::Logit => Some(
            design
                .names()
                .iter()
                .filter(|n| n.as_str() != aurora_core::analytics::design::INTERCEPT)
                .map(|n| Ok((n.clone(), odds_ratio(&fit, n)?)))
                .collect::<Result<_, aurora_core::FitError>>()?,
        ),
        _ => None,
    };
    #[derive(Serialize)]
    struct Report<'a, F: Serialize, O: Serialize> {
        users: usize,
        excluded: usize,
        fit: &'a F,
        #[serde(skip_serializing_if = "Option::is_none")]
        odds_ratios: Option<O>,
    }
    write_json(
        out.as_deref(),
        &Report { users: table.users.len(), excluded: table.excluded.total(), fit: &fit, odds_ratios: odds },
    )
}

/// Posts each bot post as JSON to a stub endpoint.
struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpTransport {
    fn new(url: String) -> Self {
        Self { client: reqwest::blocking::Client::new(), url }
    }
}

impl Transport for HttpTransport {
    fn publish(&mut self, post: &BotPost) -> Result<(), BotError> {
        let resp = self.client.post(&self.url).json(post).send().map_err(|e| BotError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(BotError::Transport(format!("{} returned {}", self.url, resp.status())));
        }
        Ok(())
    }
}

fn read_posts(path: &Path) -> CliResult<Vec<MicroPost>> {
    let mut posts = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        posts.push(serde_json::from_str(&line).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?);
    }
    Ok(posts)
}

fn default_now(posts: &[MicroPost]) -> DateTime<Utc> {
    posts
        .iter()
        .map(|p| p.created_at)
        .max()
        .map_or_else(Utc::now, |t| t + chrono::Duration::seconds(1))
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, value)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}
