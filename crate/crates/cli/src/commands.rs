//! The `gen`, `load`, `run` and `bench` commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use pimolap_core::engine;
use pimolap_core::oracle;
use pimolap_core::schema::gen_ssb_lite;
use pimolap_core::workload::SuiteEntry;
use pimolap_core::{parse_query, QueryIR, TransferStats};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{EngineKind, LayoutKind, RunConfig};
use crate::data::Dataset;
use crate::report::{geo_mean, BenchReport, BenchSummary, ConfigEcho, ConfigSummary, RunReport};
use crate::CliError;

/// Writes a generated SSB-lite star (CSV files plus `schema.json`) into
/// `out`, creating it if needed. A non-empty `out` is only overwritten with
/// `force`. Returns the written file names.
pub fn cmd_gen(scale: usize, seed: u64, out: &Path, force: bool) -> Result<Vec<String>, CliError> {
    if scale == 0 {
        return Err(CliError::Usage("--scale must be at least 1".into()));
    }
    if !force && out.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false) {
        return Err(CliError::io(out, "directory is not empty (use --force to overwrite)"));
    }
    let star = gen_ssb_lite(scale, seed);
    star.write_csv(out)?;
    let mut files: Vec<String> = std::iter::once(&star.fact)
        .chain(star.dimensions.iter().map(|d| &d.table))
        .map(|t| format!("{}.csv", t.name))
        .collect();
    files.push("schema.json".into());
    Ok(files)
}

/// Pre-joins the data, stores it under the configured layout and
/// describes the result.
pub fn cmd_load(data: &Dataset, config: &RunConfig) -> Result<Value, CliError> {
    config.validate()?;
    let memory = data.memory(config.layout, config.geometry)?;
    let layout: Value = serde_json::from_str(&memory.layout().to_json()).expect("layout JSON");
    let relations: Vec<Value> = std::iter::once(&data.star.fact)
        .chain(data.star.dimensions.iter().map(|d| &d.table))
        .map(|t| json!({ "name": t.name, "rows": t.rows.len(), "attributes": t.schema.len() }))
        .collect();
    Ok(json!({
        "relations": relations,
        "wide": {
            "name": data.wide.name,
            "records": data.wide.rows.len(),
            "attributes": data.wide.schema.len(),
            "record_bits": data.wide.schema.iter().map(|a| a.width as u64).sum::<u64>(),
        },
        "layout_mode": config.layout,
        "pages": memory.page_count(),
        "layout": layout,
    }))
}

/// Outcome of `run`: a plan when explaining, otherwise a report.
#[derive(Debug, Clone)]
pub enum RunOutput {
    Plan(Value),
    Report(Box<RunReport>),
}

fn parse(query: &str, data: &Dataset) -> Result<QueryIR, CliError> {
    let ir = parse_query(query)?;
    if ir.from != data.wide.name {
        return Err(CliError::Engine(format!("unknown relation `{}` (expected `{}`)", ir.from, data.wide.name)));
    }
    Ok(ir)
}

fn echo(config: &RunConfig, data: &Dataset, pages: usize) -> ConfigEcho {
    ConfigEcho {
        params: config.params,
        seed: config.seed,
        sample_fraction: config.sample_fraction,
        geometry: config.geometry,
        records: data.wide.rows.len(),
        pages,
    }
}

/// Parses, plans and executes one query.
pub fn cmd_run(query: &str, data: &Dataset, config: &RunConfig, explain: bool) -> Result<RunOutput, CliError> {
    config.validate()?;
    let ir = parse(query, data)?;
    if explain {
        return explain_plan(&ir, data, config).map(RunOutput::Plan);
    }
    run_ir(&ir, query, data, config).map(|r| RunOutput::Report(Box::new(r)))
}

fn explain_plan(ir: &QueryIR, data: &Dataset, config: &RunConfig) -> Result<Value, CliError> {
    if config.engine == EngineKind::Host {
        let bits = oracle::baseline_bits(ir, &data.wide.schema, data.wide.rows.len())
            .map_err(|e| CliError::Engine(e.to_string()))?;
        return Ok(json!({ "mode": "host", "referenced_attributes": ir.referenced_attrs(), "scan_bits": bits }));
    }
    let memory = data.memory(config.layout, config.geometry)?;
    let plan = engine::plan(ir, &memory, &config.engine_config())?;
    Ok(serde_json::from_str(&plan.to_json()).expect("plan JSON"))
}

fn run_ir(ir: &QueryIR, query: &str, data: &Dataset, config: &RunConfig) -> Result<RunReport, CliError> {
    let (table, stats, costs, pages, elapsed) = if config.engine == EngineKind::Host {
        let start = Instant::now();
        let (table, baseline) = oracle::execute_host(ir, &data.wide).map_err(|e| CliError::Engine(e.to_string()))?;
        let elapsed = start.elapsed();
        let stats = TransferStats { pim_to_host_bits: baseline, host_baseline_bits: baseline, ..Default::default() };
        (table, stats, None, 0, elapsed)
    } else {
        let mut memory = data.memory(config.layout, config.geometry)?;
        let start = Instant::now();
        let out = engine::run(ir, &mut memory, &config.engine_config())?;
        let elapsed = start.elapsed();
        (out.table, out.stats, out.plan.costs, memory.page_count(), elapsed)
    };
    Ok(RunReport {
        name: None,
        query: query.to_string(),
        engine: config.engine,
        layout: config.layout,
        circuit: config.circuit,
        reduction_ratio: stats.reduction_ratio(),
        result: Some(table),
        stats: Some(stats),
        modeled_costs: costs,
        wall_time_ms: elapsed.as_secs_f64() * 1e3,
        config: echo(config, data, pages),
        error: None,
    })
}

/// Reads a suite file: a JSON array of `{name, query}`.
pub fn read_suite(path: &Path) -> Result<Vec<SuiteEntry>, CliError> {
    crate::config::read_json(path)
}

/// Runs every suite query under every (engine, layout) pair. Cells run in
/// parallel on `jobs` threads (0 picks the default), each with its own
/// memory. A failing query is reported and the rest still run.
pub fn cmd_bench(
    suite: &[SuiteEntry],
    data: &Dataset,
    engines: &[EngineKind],
    layouts: &[LayoutKind],
    config: &RunConfig,
    jobs: usize,
) -> Result<BenchReport, CliError> {
    config.validate()?;
    let mut cells = Vec::new();
    for &engine in engines {
        for &layout in layouts {
            for entry in suite {
                cells.push((RunConfig { engine, layout, ..*config }, entry));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Usage(e.to_string()))?;
    let start = Instant::now();
    let reports: Vec<RunReport> = pool.install(|| {
        cells
            .par_iter()
            .map(|(cfg, entry)| {
                let result = parse(&entry.query, data).and_then(|ir| run_ir(&ir, &entry.query, data, cfg));
                let mut r = result.unwrap_or_else(|e| RunReport {
                    name: None,
                    query: entry.query.clone(),
                    engine: cfg.engine,
                    layout: cfg.layout,
                    circuit: cfg.circuit,
                    result: None,
                    stats: None,
                    reduction_ratio: None,
                    modeled_costs: None,
                    wall_time_ms: 0.0,
                    config: echo(cfg, data, 0),
                    error: Some(e.to_string()),
                });
                r.name = Some(entry.name.clone());
                r
            })
            .collect()
    });
    let mut configs = Vec::new();
    for &engine in engines {
        for &layout in layouts {
            let rs: Vec<&RunReport> = reports.iter().filter(|r| r.engine == engine && r.layout == layout).collect();
            let ratios: Vec<f64> = rs.iter().filter_map(|r| r.reduction_ratio).collect();
            let stats: Vec<&TransferStats> = rs.iter().filter_map(|r| r.stats.as_ref()).collect();
            configs.push(ConfigSummary {
                engine,
                layout,
                circuit: config.circuit,
                queries: rs.len(),
                failed: rs.iter().filter(|r| r.error.is_some()).count(),
                geo_mean_reduction: geo_mean(&ratios),
                total_pim_to_host_bits: stats.iter().map(|s| s.pim_to_host_bits).sum(),
                total_transfer_bits: stats.iter().map(|s| s.total_transfer_bits()).sum(),
                total_cell_writes: stats.iter().map(|s| s.cell_writes).sum(),
            });
        }
    }
    let failed = configs.iter().any(|c| c.failed > 0);
    Ok(BenchReport {
        reports,
        summary: BenchSummary { configs, failed, wall_time_ms: start.elapsed().as_secs_f64() * 1e3 },
    })
}

/// Default output directory name for `gen`.
pub fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}
