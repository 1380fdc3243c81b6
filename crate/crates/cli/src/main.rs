use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use teleosim_core::environment::TaskId;
use teleosim_core::harness::{
    export_table, run_batch_with, summarize_dir, write_dataset, BatchSpec, HarnessError, MetricsSummary,
    OperatorSelect, SessionConfig, TableFormat, TableMetric, TaskSelect,
};
use teleosim_core::operators::TeleopMode;
use teleosim_service::{serve, ServiceConfig, ServiceError};

#[derive(Parser)]
#[command(name = "teleosim", version, about = "Bilateral teleoperation peg-in-hole simulator")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of scripted trials and print the result table.
    Run(RunArgs),
    /// Rebuild result tables from a directory of trial datasets.
    Table(TableArgs),
    /// Serve a live session on a websocket at /session.
    Serve(ServeArgs),
    /// Check a session config file and print its hash.
    ValidateConfig { file: PathBuf },
    /// Print the default session config as TOML.
    DefaultConfig,
}

#[derive(Args)]
struct SessionArgs {
    /// Session config file (TOML).
    #[arg(long, env = "TELEOSIM_CONFIG")]
    config: Option<PathBuf>,
    /// Geometry scale factor.
    #[arg(long)]
    scale: Option<f64>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl SessionArgs {
    fn load(&self) -> Result<SessionConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => SessionConfig::load(p)?,
            None => SessionConfig::default(),
        };
        if let Some(s) = self.scale {
            cfg.geometry_scale = s;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Tasks, comma separated (A..F, training).
    #[arg(long, value_delimiter = ',')]
    task: Vec<String>,
    /// Modes, comma separated, or `all`.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<String>,
    /// novice, intermediate or expert.
    #[arg(long)]
    operator: Option<String>,
    /// Trials per task × mode cell.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Write one dataset per trial and summary.json here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// md or csv.
    #[arg(long, default_value = "md")]
    format: String,
    /// success, time, stage1, stage2, efficiency or all.
    #[arg(long, default_value = "all")]
    metric: String,
    /// Run trials one after another.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct TableArgs {
    /// Directory with trial datasets.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "md")]
    format: String,
    #[arg(long, default_value = "all")]
    metric: String,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Task for trials started without one.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    /// Write finished trials here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Snapshot rate, Hz.
    #[arg(long, default_value_t = 60.0)]
    snapshot_hz: f64,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn parse_task(s: &str) -> Result<TaskSelect, CliError> {
    Ok(TaskSelect::Preset(s.parse::<TaskId>().map_err(config_err)?))
}

fn parse_modes(v: &[String]) -> Result<Vec<TeleopMode>, CliError> {
    if v.iter().any(|m| m.eq_ignore_ascii_case("all")) {
        return Ok(TeleopMode::ALL.to_vec());
    }
    v.iter().map(|m| m.parse().map_err(config_err)).collect()
}

fn metrics(s: &str) -> Result<Vec<TableMetric>, CliError> {
    if s == "all" {
        return Ok(vec![
            TableMetric::SuccessRate,
            TableMetric::MeanTime,
            TableMetric::MeanStage1,
            TableMetric::MeanStage2,
            TableMetric::Efficiency,
        ]);
    }
    s.split(',').map(|m| m.trim().parse().map_err(CliError::from)).collect()
}

fn print_tables(summary: &MetricsSummary, format: &str, metric: &str) -> Result<(), CliError> {
    let format: TableFormat = format.parse()?;
    for (i, m) in metrics(metric)?.into_iter().enumerate() {
        if i > 0 {
            println!();
        }
        print!("{}", export_table(summary, format, m));
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let mut base = args.session.load()?;
    if let Some(op) = &args.operator {
        if op.eq_ignore_ascii_case("human") {
            return Err(CliError::Config("batch runs need a scripted operator".into()));
        }
        base.operator = OperatorSelect::Named(op.clone());
    }
    if base.operator.is_human() {
        return Err(CliError::Config("batch runs need a scripted operator".into()));
    }
    base.record_rows = args.out.is_some();
    let tasks = if args.task.is_empty() {
        vec![base.task.clone()]
    } else {
        args.task.iter().map(|t| parse_task(t)).collect::<Result<_, _>>()?
    };
    let modes = if args.mode.is_empty() {
        vec![base.mode]
    } else {
        parse_modes(&args.mode)?
    };
    args.format.parse::<TableFormat>()?;
    metrics(&args.metric)?;

    let mut spec = BatchSpec::new(base.clone(), tasks, modes, args.trials, base.seed);
    spec.parallel = !args.serial;
    let out = args.out.clone();
    let protocol = base.protocol;
    log::info!("running {} trials per cell", args.trials);
    let summary = run_batch_with(&spec, |rec| match &out {
        Some(dir) => write_dataset(rec, &protocol, dir).map(|_| ()),
        None => Ok(()),
    })?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        let path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    print_tables(&summary, &args.format, &args.metric)?;
    let failed: usize = summary.cells.iter().map(|c| c.errors.len()).sum();
    if failed > 0 {
        for c in &summary.cells {
            for (seed, e) in &c.errors {
                eprintln!("{} {} seed {seed}: {e}", c.task, c.mode.as_str());
            }
        }
        return Err(CliError::Runtime(format!("{failed} trials failed to run")));
    }
    Ok(())
}

fn table(args: TableArgs) -> Result<(), CliError> {
    let summary = summarize_dir(&args.input).map_err(|e| CliError::Runtime(e.to_string()))?;
    print_tables(&summary, &args.format, &args.metric)
}

fn serve_cmd(args: ServeArgs) -> Result<(), CliError> {
    let mut session = args.session.load()?;
    if let Some(t) = &args.task {
        session.task = parse_task(t)?;
    }
    if let Some(m) = &args.mode {
        session.mode = m.parse().map_err(config_err)?;
    }
    let bind: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::Config(format!("bad address {}:{}: {e}", args.host, args.port)))?;
    let cfg = ServiceConfig {
        session,
        bind,
        out_dir: args.out,
        snapshot_hz: args.snapshot_hz,
        ..ServiceConfig::default()
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    rt.block_on(async move {
        let handle = serve(cfg).await?;
        eprintln!("listening on ws://{}/session", handle.addr());
        let stop = handle.stopper();
        tokio::spawn(async move {
            if tokio::signal::ctrl_c().await.is_ok() {
                let _ = stop.send(true);
            }
        });
        handle.join().await;
        Ok(())
    })
}

fn validate(file: &Path) -> Result<(), CliError> {
    let cfg = SessionConfig::load(file)?;
    println!("ok {}", cfg.config_hash());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Table(a) => table(a),
        Command::Serve(a) => serve_cmd(a),
        Command::ValidateConfig { file } => validate(&file),
        Command::DefaultConfig => {
            print!("{}", SessionConfig::default().to_toml());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
