use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use isec::embedding::MissingPolicy;
use isec::perturb_sim::{correlate, simulate, EventCount, TypoModel};
use isec::report::{run_summary, write_json_file, write_ranking, OutputFormat, RankingReport};
use isec::service::{ServiceConfig, DEFAULT_UPLOAD_LIMIT};
use isec::{
    align, rank_brute_force, read_dataset, CostConfig, HashEmbedder, IndexMode, IndexParams,
    NormalizationPolicy, Taxonomy,
};

#[derive(Parser)]
#[command(name = "isec", version, about = "Rank category pairs by sensitivity to typing errors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score and rank label pairs of a CSV column.
    Analyze(AnalyzeArgs),
    /// Show the minimal weighted edit path between two labels.
    Align(AlignArgs),
    /// Inject keyboard typos and measure how often labels get confused.
    Simulate(SimulateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct CostArgs {
    /// Cost-override JSON file.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Exponent balancing semantic distance against morphology, in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Penalty weight on insertion/deletion/substitution cost.
    #[arg(long = "k-penalty")]
    k_penalty: Option<f64>,
}

impl CostArgs {
    fn load(&self) -> anyhow::Result<CostConfig> {
        let mut cfg = match &self.matrix {
            Some(p) => CostConfig::load(p)?,
            None => CostConfig::default(),
        };
        if let Some(a) = self.alpha {
            cfg.set_alpha(a)?;
        }
        if let Some(k) = self.k_penalty {
            cfg.set_k(k)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct InputArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "label")]
    label_col: String,
    /// Column holding pre-aggregated counts; rows count once otherwise.
    #[arg(long)]
    freq_col: Option<String>,
    #[arg(long)]
    case_fold: bool,
    #[arg(long)]
    no_trim: bool,
    /// TSV of precomputed label vectors (`label<TAB>v1 v2 ...`).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Hash-embed labels missing from --embeddings instead of failing.
    #[arg(long, requires = "embeddings")]
    embed_missing: bool,
}

impl InputArgs {
    fn taxonomy(&self) -> anyhow::Result<Taxonomy> {
        let policy = NormalizationPolicy {
            case_fold: self.case_fold,
            trim: !self.no_trim,
            ..NormalizationPolicy::default()
        };
        let ds = read_dataset(&self.input, &self.label_col, self.freq_col.as_deref(), policy)
            .with_context(|| format!("reading {}", self.input.display()))?;
        for c in &ds.duplicates.collisions {
            log::warn!("{:?} merges {} spellings: {:?}", c.normalized, c.raw_variants.len(), c.raw_variants);
        }
        let tax = match &self.embeddings {
            Some(path) => {
                let policy = if self.embed_missing {
                    MissingPolicy::HashFallback
                } else {
                    MissingPolicy::Fail
                };
                ds.to_taxonomy_with_embeddings(path, policy)?
            }
            None => ds.to_taxonomy(&HashEmbedder::default())?,
        };
        if tax.len() < 2 {
            bail!("need at least two distinct labels, found {}", tax.len());
        }
        Ok(tax)
    }
}

#[derive(Args)]
struct IndexArgs {
    /// Semantic neighbours retrieved per label.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long, default_value = "hnsw")]
    index_mode: IndexMode,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    ef_search: usize,
}

impl IndexArgs {
    fn params(&self) -> IndexParams {
        IndexParams {
            k: self.top_k,
            mode: self.index_mode,
            seed: self.seed,
            ef_search: self.ef_search,
            ..IndexParams::default()
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    cost: CostArgs,
    #[command(flatten)]
    index: IndexArgs,
    /// Score every pair instead of Top-K candidates.
    #[arg(long)]
    brute_force: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Keep only the first M ranked pairs.
    #[arg(long)]
    top_m: Option<usize>,
}

#[derive(Args)]
struct AlignArgs {
    a: String,
    b: String,
    #[command(flatten)]
    cost: CostArgs,
    /// Print the path as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    cost: CostArgs,
    #[command(flatten)]
    index: IndexArgs,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Margin under which the best two candidates count as tied.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Typo model JSON; QWERTY single-event defaults otherwise.
    #[arg(long)]
    typo_model: Option<PathBuf>,
    /// Events per trial.
    #[arg(long)]
    events: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    #[arg(long, default_value = "isec-data")]
    work_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_UPLOAD_LIMIT / (1024 * 1024))]
    max_upload_mb: usize,
}

fn analyze(args: AnalyzeArgs) -> anyhow::Result<()> {
    let cfg = args.cost.load()?;
    let tax = args.input.taxonomy()?;
    let params = args.index.params().fitted_to(tax.len());
    if params.k < args.index.top_k {
        log::warn!("top-k {} exceeds n-1; clamped to {}", args.index.top_k, params.k);
    }
    let started = Instant::now();
    let ranking = if args.brute_force {
        rank_brute_force(&tax, &cfg)?
    } else {
        isec::rank_taxonomy(&tax, &cfg, &params)?
    };
    let summary = run_summary(&ranking.stats, Some(started.elapsed()));
    let report = RankingReport {
        scores: &ranking.scores,
        cfg: &cfg,
        params: &params,
        summary: summary.clone(),
    };
    match &args.output {
        Some(path) => write_ranking(&report, path, args.format, args.top_m)?,
        None => {
            let stdout = std::io::stdout().lock();
            match args.format {
                OutputFormat::Csv => report.write_csv(stdout, args.top_m)?,
                OutputFormat::Json => report.write_json(stdout, args.top_m)?,
            }
        }
    }
    eprint!("{summary}");
    Ok(())
}

fn align_cmd(args: AlignArgs) -> anyhow::Result<()> {
    let cfg = args.cost.load()?;
    let path = align(&args.a, &args.b, &cfg);
    let mut out = std::io::stdout().lock();
    if args.json {
        serde_json::to_writer_pretty(&mut out, &path)?;
        writeln!(out)?;
        return Ok(());
    }
    writeln!(out, "{} -> {}", args.a, args.b)?;
    for op in &path.ops {
        let from = op.from.as_deref().unwrap_or("");
        let to = op.to.as_deref().unwrap_or("");
        writeln!(out, "  {:<13} @{:<3} {:>4} -> {:<4} cost {}", format!("{:?}", op.kind).to_lowercase(), op.pos, from, to, op.cost)?;
    }
    writeln!(out, "total cost: {}", path.total_cost)?;
    writeln!(out, "operations: {}", path.n_ops)?;
    if path.n_ops > 0 {
        writeln!(out, "cm: {}  cp: {}  cmp: {}", path.cm, path.cp, isec::cmp(&path, cfg.k())?)?;
    }
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> anyhow::Result<()> {
    let cfg = args.cost.load()?;
    let tax = args.input.taxonomy()?;
    let mut model = match &args.typo_model {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<TypoModel>(&text)?
        }
        None => TypoModel::default(),
    };
    model.seed = args.index.seed;
    if let Some(n) = args.events {
        model.events_per_label = EventCount::Fixed(n);
    }
    let stats = simulate(&tax, &cfg, &model, args.trials, args.delta)?;
    let value = if isec::perturb_sim::check_trials(tax.len(), args.trials).is_ok() {
        let params = args.index.params().fitted_to(tax.len());
        let ranking = isec::rank_taxonomy(&tax, &cfg, &params)?;
        let report = correlate(&ranking.scores, stats, model.seed);
        match (report.spearman, report.ci_low, report.ci_high) {
            (Some(r), Some(lo), Some(hi)) => eprintln!("spearman {r:.4} (95% CI {lo:.4} .. {hi:.4})"),
            _ => eprintln!("correlation degenerate: confusion or ISEC has no variance"),
        }
        serde_json::to_value(&report)?
    } else {
        log::warn!("fewer than 100 trials per label; correlation skipped");
        serde_json::to_value(&stats)?
    };
    match &args.out {
        Some(p) => write_json_file(&value, p)?,
        None => println!("{}", serde_json::to_string_pretty(&value)?),
    }
    Ok(())
}

fn serve_cmd(args: ServeArgs) -> anyhow::Result<()> {
    let mut config = ServiceConfig::new(args.work_dir);
    config.max_upload_bytes = args.max_upload_mb * 1024 * 1024;
    let addr = SocketAddr::new(args.bind, args.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(isec::service::serve(addr, config))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Align(a) => align_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
