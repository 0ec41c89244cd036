use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pimolap_cli::commands::{default_data_dir, read_suite};
use pimolap_cli::config::read_json;
use pimolap_cli::{
    cmd_bench, cmd_gen, cmd_load, cmd_run, CircuitKind, CliError, Dataset, EngineKind, LayoutKind, RunConfig, RunOutput,
};
use pimolap_core::workload::ssb_suite;

/// Functional simulator of bulk-bitwise processing-in-memory for analytical queries.
#[derive(Debug, Parser)]
#[command(name = "pimolap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a deterministic SSB-lite star as CSV files plus schema.json.
    Gen {
        #[arg(long, default_value_t = 1)]
        scale: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Load and pre-join a star, store it and describe the layout.
    Load {
        #[command(flatten)]
        common: Common,
    },
    /// Run one query and emit a report.
    Run {
        /// File holding one query.
        query_file: Option<PathBuf>,
        #[arg(long, conflicts_with = "query_file")]
        query_string: Option<String>,
        #[arg(long, value_enum)]
        engine: Option<EngineKind>,
        /// Print the plan as JSON without executing.
        #[arg(long)]
        explain: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run a query suite over an engine by layout matrix.
    Bench {
        /// JSON array of {name, query}; the built-in SSB-lite suite by default.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [EngineKind::Pim, EngineKind::PimFilter])]
        engines: Vec<EngineKind>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [LayoutKind::OneXb, LayoutKind::TwoXb])]
        layouts: Vec<LayoutKind>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Directory written by `gen`; data is generated in memory when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    layout: Option<LayoutKind>,
    #[arg(long, value_enum)]
    circuit: Option<CircuitKind>,
    #[arg(long)]
    sample_fraction: Option<f64>,
    /// JSON file with c_pim_op, c_bit_xfer, c_host_rec, c_periph_row.
    #[arg(long)]
    cost_params: Option<PathBuf>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    scratch_bits: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Write the output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Human-readable output instead of JSON.
    #[arg(long)]
    pretty: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::from_env()?;
        if let Some(v) = self.scale {
            c.scale = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.layout {
            c.layout = v;
        }
        if let Some(v) = self.circuit {
            c.circuit = v;
        }
        if let Some(v) = self.sample_fraction {
            c.sample_fraction = v;
        }
        if let Some(p) = &self.cost_params {
            c.params = read_json(p)?;
        }
        if let Some(v) = self.rows {
            c.geometry.rows = v;
        }
        if let Some(v) = self.cols {
            c.geometry.cols = v;
        }
        if let Some(v) = self.scratch_bits {
            c.geometry.scratch_bits = v;
        }
        c.validate()?;
        Ok(c)
    }

    fn dataset(&self, config: &RunConfig) -> Result<Dataset, CliError> {
        Dataset::resolve(self.data.as_deref(), config)
    }

    fn configure_threads(&self) {
        if self.jobs > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(self.jobs).build_global();
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n")).map_err(|e| CliError::Io { path: p.display().to_string(), message: e.to_string() }),
        None => {
            let mut s = std::io::stdout().lock();
            writeln!(s, "{text}").map_err(|e| CliError::Io { path: "<stdout>".into(), message: e.to_string() })
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Gen { scale, seed, out, force } => {
            let seed = match seed {
                Some(s) => s,
                None => RunConfig::from_env()?.seed,
            };
            let dir = out.unwrap_or_else(default_data_dir);
            let files = cmd_gen(scale, seed, &dir, force)?;
            emit(None, &to_json(&serde_json::json!({ "out": dir, "files": files, "scale": scale, "seed": seed })))?;
            Ok(0)
        }
        Command::Load { common } => {
            common.configure_threads();
            let config = common.config()?;
            let data = common.dataset(&config)?;
            emit(common.out.as_deref(), &to_json(&cmd_load(&data, &config)?))?;
            Ok(0)
        }
        Command::Run { query_file, query_string, engine, explain, common } => {
            common.configure_threads();
            let mut config = common.config()?;
            if let Some(e) = engine {
                config.engine = e;
            }
            let query = match (query_string, query_file) {
                (Some(q), _) => q,
                (None, Some(p)) => std::fs::read_to_string(&p).map_err(|e| CliError::Io { path: p.display().to_string(), message: e.to_string() })?,
                (None, None) => return Err(CliError::Usage("a query file or --query-string is required".into())),
            };
            let data = common.dataset(&config)?;
            match cmd_run(query.trim(), &data, &config, explain)? {
                RunOutput::Plan(p) => emit(common.out.as_deref(), &to_json(&p))?,
                RunOutput::Report(r) if common.pretty => emit(common.out.as_deref(), r.pretty().trim_end())?,
                RunOutput::Report(r) => emit(common.out.as_deref(), &to_json(&r))?,
            }
            Ok(0)
        }
        Command::Bench { suite, engines, layouts, common } => {
            let config = common.config()?;
            let suite = match suite {
                Some(p) => read_suite(&p)?,
                None => ssb_suite(),
            };
            let data = common.dataset(&config)?;
            let report = cmd_bench(&suite, &data, &engines, &layouts, &config, common.jobs)?;
            if common.pretty {
                emit(common.out.as_deref(), report.pretty().trim_end())?;
            } else {
                emit(common.out.as_deref(), &to_json(&report))?;
            }
            Ok(if report.summary.failed { 3 } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
