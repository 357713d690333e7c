use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};

use gridbench::domain::Domain;
use gridbench::harness::{
    read_records, run_suite, write_records, AgentSpec, EndpointClient, EndpointConfig, SuiteOptions,
};
use gridbench::report::aggregate;
use gridbench::suite::{generate_suite, load_entries, validate_dir, SuitePreset, MANIFEST_FILE};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "gridbench",
    version,
    about = "Grid constraint-satisfaction tasks for tool-calling agents"
)]
struct Cli {
    /// Base seed for generation and episodes.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "suite")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a suite of instances with answer keys and a manifest.
    Generate(GenerateArgs),
    /// Validate every instance under a directory against its answer key.
    Validate {
        /// Directory to scan; defaults to --out.
        dir: Option<PathBuf>,
    },
    /// Run an agent over a generated suite and write JSON-lines records.
    Run(RunArgs),
    /// Aggregate records into CSV tables.
    Report {
        /// One or more records files.
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Selection {
    /// Domains, comma separated.
    #[arg(long, value_delimiter = ',')]
    domains: Option<Vec<Domain>>,
    /// Hidden-slot counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<usize>>,
    /// Decoy budgets, comma separated.
    #[arg(long, value_delimiter = ',')]
    b: Option<Vec<usize>>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    select: Selection,
    /// Candidates per hidden slot.
    #[arg(long, default_value_t = 25)]
    k: usize,
    /// Items per domain pool.
    #[arg(long, default_value_t = gridbench::domain::DEFAULT_POOL_SIZE)]
    pool_size: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentKind {
    Oracle,
    Random,
    Endpoint,
}

#[derive(Args)]
struct RunArgs {
    /// Suite manifest; defaults to <out>/manifest.json.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    select: Selection,
    #[arg(long, value_enum, default_value_t = AgentKind::Oracle)]
    agent: AgentKind,
    /// Probability that any tool call fails.
    #[arg(long, alias = "p", default_value_t = 0.0)]
    fail_rate: f64,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    max_output_tokens: Option<u32>,
    #[arg(long)]
    max_token_overflows: Option<u32>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Records file; defaults to <out>/records/<agent>_p<fail-rate>.jsonl.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Also write one transcript per episode.
    #[arg(long)]
    transcripts: bool,
    /// Chat-completions URL (endpoint agent).
    #[arg(long, env = "GRIDBENCH_ENDPOINT_URL")]
    endpoint_url: Option<String>,
    /// Model name (endpoint agent).
    #[arg(long, env = "GRIDBENCH_MODEL")]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Seconds per HTTP request.
    #[arg(long, default_value_t = 600)]
    timeout: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(&cli, args),
        Command::Validate { dir } => cmd_validate(dir.as_deref().unwrap_or(&cli.out)),
        Command::Run(args) => cmd_run(&cli, args),
        Command::Report { records } => cmd_report(&cli, records),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

type CmdResult = Result<(), (u8, String)>;

fn config_err(m: impl Into<String>) -> (u8, String) {
    (EXIT_CONFIG, m.into())
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> CmdResult {
    let defaults = SuitePreset::default();
    let preset = SuitePreset {
        domains: args.select.domains.clone().unwrap_or(defaults.domains),
        h_values: args.select.h.clone().unwrap_or(defaults.h_values),
        b_values: args.select.b.clone().unwrap_or(defaults.b_values),
        k: args.k,
        pool_size: args.pool_size,
        seed: cli.seed,
    };
    if preset.instance_count() == 0 {
        return Err(config_err("nothing to generate"));
    }
    if preset.k < 2 {
        return Err(config_err("k must be at least 2"));
    }
    let started = Instant::now();
    let manifest = generate_suite(&preset, &cli.out).map_err(config_err)?;
    let failed: Vec<_> = manifest.failures().collect();
    println!(
        "generated {} of {} instances in {:.1}s into {}",
        manifest.entries.len() - failed.len(),
        manifest.entries.len(),
        started.elapsed().as_secs_f64(),
        cli.out.display()
    );
    if failed.is_empty() {
        return Ok(());
    }
    for e in &failed {
        eprintln!("{}: {}", e.path, e.error.as_deref().unwrap_or_default());
    }
    Err((EXIT_FAILURE, format!("{} instances failed to generate", failed.len())))
}

fn cmd_validate(dir: &Path) -> CmdResult {
    if !dir.is_dir() {
        return Err(config_err(format!("{} is not a directory", dir.display())));
    }
    let checks = validate_dir(dir).map_err(|e| config_err(e.to_string()))?;
    if checks.is_empty() {
        return Err(config_err(format!("no instances under {}", dir.display())));
    }
    let mut bad = 0;
    for c in &checks {
        match &c.result {
            Ok(r) if r.passed() => {}
            Ok(r) => {
                bad += 1;
                for f in &r.failures {
                    eprintln!("{}: {f}", c.path.display());
                }
            }
            Err(e) => {
                bad += 1;
                eprintln!("{}: {e}", c.path.display());
            }
        }
    }
    println!("{} of {} instances valid", checks.len() - bad, checks.len());
    if bad > 0 {
        return Err((EXIT_FAILURE, format!("{bad} instances failed validation")));
    }
    Ok(())
}

fn cmd_run(cli: &Cli, args: &RunArgs) -> CmdResult {
    if !(0.0..=1.0).contains(&args.fail_rate) {
        return Err(config_err("--fail-rate must be in [0, 1]"));
    }
    let manifest_path = args.manifest.clone().unwrap_or_else(|| cli.out.join(MANIFEST_FILE));
    let sel = &args.select;
    let keep = |e: &gridbench::suite::ManifestEntry| {
        sel.domains.as_ref().is_none_or(|d| d.contains(&e.domain))
            && sel.h.as_ref().is_none_or(|h| h.contains(&e.h))
            && sel.b.as_ref().is_none_or(|b| b.contains(&e.b))
    };
    let (manifest, entries) = load_entries(&manifest_path, keep).map_err(config_err)?;
    if entries.is_empty() {
        return Err(config_err("no instances match the selection"));
    }
    let mut limits = manifest.limits;
    limits.max_steps = args.max_steps.unwrap_or(limits.max_steps);
    limits.max_output_tokens = args.max_output_tokens.unwrap_or(limits.max_output_tokens);
    limits.max_token_overflows = args.max_token_overflows.unwrap_or(limits.max_token_overflows);
    limits.parallelism = args.parallelism.unwrap_or(limits.parallelism);
    limits.check().map_err(config_err)?;

    let agent = match args.agent {
        AgentKind::Oracle => AgentSpec::Oracle,
        AgentKind::Random => AgentSpec::Random,
        AgentKind::Endpoint => {
            let url = args
                .endpoint_url
                .clone()
                .ok_or_else(|| config_err("--endpoint-url is required"))?;
            let model = args.model.clone().ok_or_else(|| config_err("--model is required"))?;
            let mut config = EndpointConfig::new(url, model);
            config.api_key_env = std::env::var(&args.api_key_env)
                .is_ok()
                .then(|| args.api_key_env.clone());
            config.temperature = args.temperature;
            config.max_output_tokens = limits.max_output_tokens;
            config.timeout = Duration::from_secs(args.timeout);
            AgentSpec::Endpoint(EndpointClient::new(config).map_err(config_err)?)
        }
    };
    let label = match args.agent {
        AgentKind::Oracle => "oracle",
        AgentKind::Random => "random",
        AgentKind::Endpoint => "endpoint",
    };
    let records_path = args.records.clone().unwrap_or_else(|| {
        cli.out
            .join("records")
            .join(format!("{label}_p{}.jsonl", args.fail_rate))
    });
    let transcript_dir = records_path.with_extension("transcripts");
    let opts = SuiteOptions {
        limits,
        fail_rate: args.fail_rate,
        seed: cli.seed,
        transcript_dir: args.transcripts.then_some(transcript_dir.as_path()),
    };
    let started = Instant::now();
    let records = run_suite(&entries, &agent, &opts);
    write_records(&records_path, &records).map_err(|e| (EXIT_FAILURE, e.to_string()))?;
    let solved: u32 = records.iter().map(|r| u32::from(r.reward)).sum();
    println!(
        "{} episodes, {solved} solved ({:.1}%), {:.1}s; records in {}",
        records.len(),
        100.0 * f64::from(solved) / records.len() as f64,
        started.elapsed().as_secs_f64(),
        records_path.display()
    );
    Ok(())
}

fn cmd_report(cli: &Cli, files: &[PathBuf]) -> CmdResult {
    let mut records = Vec::new();
    for f in files {
        records.extend(read_records(f).map_err(config_err)?);
    }
    let report = aggregate(&records).map_err(config_err)?;
    let dir = cli.out.join("report");
    report.write_csv(&dir).map_err(|e| (EXIT_FAILURE, e.to_string()))?;
    print!("{}", report.by_domain_csv());
    println!("tables written to {}", dir.display());
    Ok(())
}
