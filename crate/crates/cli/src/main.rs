mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Config, Mode, Task, DATA_DIR_ENV};

/// Multi-head online learning for delayed conversions.
#[derive(Debug, Parser)]
#[command(name = "mhol", version)]
struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base directory for relative paths (overrides MHOL_DATA_DIR).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flags that override single config values.
#[derive(Debug, Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    hash_bits: Option<u32>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    l2: Option<f64>,
    /// Window boundaries in days, e.g. 1,2,5,12,30.
    #[arg(long, global = true, value_delimiter = ',')]
    windows: Option<Vec<u64>>,
    /// Window boundaries in seconds.
    #[arg(long, global = true, value_delimiter = ',')]
    window_secs: Option<Vec<u64>>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Generator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic click log as TSV.
    GenData {
        #[arg(long, default_value = "clicks.tsv")]
        out: PathBuf,
        /// Also write the log as daily partitions under this directory.
        #[arg(long)]
        partitions: Option<PathBuf>,
        #[arg(long)]
        n_clicks: Option<usize>,
        #[arg(long)]
        days: Option<u64>,
        /// Log-odds drift per day.
        #[arg(long)]
        drift: Option<f64>,
    },
    /// Choose window boundaries from the delays in a click log.
    DesignWindows {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        heads: usize,
        /// Round boundaries up to whole days.
        #[arg(long)]
        day_aligned: bool,
        /// Write a `[windows]` TOML snippet here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write its checkpoint directory.
    Train {
        /// TSV click log (streaming mode).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Daily partition directory (batch mode).
        #[arg(long)]
        partitions: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, value_enum)]
        task: Option<Task>,
        /// Simulated clock at the end of training; defaults to the last click.
        #[arg(long)]
        until: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Progressive evaluation over the final days of a log.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long, value_enum)]
        task: Option<Task>,
        #[arg(long)]
        eval_days: Option<i64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge evaluation reports into a comparison table.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> mhol::Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let o = &cli.overrides;
    if let Some(b) = o.hash_bits {
        cfg.features.hash_bits = b;
    }
    if let Some(lr) = o.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let Some(l2) = o.l2 {
        cfg.train.l2_lambda = l2;
    }
    if let Some(d) = &o.windows {
        cfg.windows.days = Some(d.clone());
        cfg.windows.seconds = None;
    }
    if let Some(s) = &o.window_secs {
        cfg.windows.seconds = Some(s.clone());
        cfg.windows.days = None;
    }
    if let Some(w) = o.workers {
        cfg.run.workers = w;
    }
    if let Some(s) = o.seed {
        cfg.generator.seed = s;
    }
    if let Some(d) = cli.data_dir.clone().or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)) {
        cfg.data.dir = Some(d);
    }
    match &cli.command {
        Command::GenData { n_clicks, days, drift, .. } => {
            if let Some(n) = n_clicks {
                cfg.generator.n_clicks = *n;
            }
            if let Some(d) = days {
                cfg.generator.n_days = *d;
            }
            if let Some(d) = drift {
                cfg.generator.drift_per_day = *d;
            }
        }
        Command::Train { method, mode, task, .. } => {
            if let Some(m) = method {
                cfg.run.method = m.clone();
            }
            if let Some(m) = mode {
                cfg.run.mode = *m;
            }
            if let Some(t) = task {
                cfg.run.task = *t;
            }
        }
        Command::Evaluate { method, task, eval_days, .. } => {
            if let Some(m) = method {
                cfg.run.method = m.clone();
            }
            if let Some(t) = task {
                cfg.run.task = *t;
            }
            if let Some(d) = eval_days {
                cfg.run.eval_days = *d;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> mhol::Result<()> {
    let cfg = load_config(&cli)?;
    let ctx = commands::Context::new(cfg);
    match cli.command {
        Command::GenData { out, partitions, .. } => ctx.gen_data(&out, partitions.as_deref()),
        Command::DesignWindows { input, schema, heads, day_aligned, out } => {
            ctx.design_windows(&input, schema.as_deref(), heads, day_aligned, out.as_deref())
        }
        Command::Train { input, partitions, schema, until, out, .. } => {
            ctx.train(input.as_deref(), partitions.as_deref(), schema.as_deref(), until, &out)
        }
        Command::Evaluate { input, schema, out, .. } => ctx.evaluate(&input, schema.as_deref(), &out),
        Command::Report { reports, out } => ctx.report(&reports, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", config::one_line(msg.lines().next().unwrap_or("invalid arguments")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", config::one_line(&e.to_string()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
