//! Executes every scenario × replication cell and writes the artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use ftsim::engine::{run_scenario, EventRecord, RunResult, Scenario, SimulationContext};

use crate::config::{replication_seed, ConfigFile};
use crate::output::{read_metrics, write_metrics, Manifest, MetricsRow};
use crate::summary::{summarize_rows, to_csv};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Serial,
    /// Rayon pool; 0 picks the number of cores.
    Parallel { threads: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub execution: Execution,
    pub write_events: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            execution: Execution::Parallel { threads: 0 },
            write_events: true,
        }
    }
}

pub struct CellOutput {
    pub scenario: usize,
    pub replication: usize,
    pub result: RunResult,
}

fn event_path(dir: &Path, label: &str, replication: usize) -> PathBuf {
    dir.join(format!("{label}_rep{replication:02}.csv"))
}

fn run_cell(
    sc: &Scenario,
    replication: usize,
    seed: u64,
    ctx: &Arc<SimulationContext>,
    events_dir: Option<&Path>,
) -> Result<RunResult, CliError> {
    let runtime = |e: &dyn std::fmt::Display| {
        CliError::Runtime(format!("{} replication {replication}: {e}", sc.label))
    };
    let Some(dir) = events_dir else {
        return run_scenario(sc, Arc::clone(ctx), seed, &mut |_| {}).map_err(|e| runtime(&e));
    };
    let file = File::create(event_path(dir, &sc.label, replication)).map_err(|e| runtime(&e))?;
    let mut w = BufWriter::new(file);
    let mut io_error = writeln!(w, "{}", EventRecord::CSV_HEADER).err();
    let result = run_scenario(sc, Arc::clone(ctx), seed, &mut |e| {
        if io_error.is_none() {
            io_error = writeln!(w, "{}", e.to_csv_row()).err();
        }
    })
    .map_err(|e| runtime(&e))?;
    if let Some(e) = io_error.or_else(|| w.flush().err()) {
        return Err(runtime(&e));
    }
    Ok(result)
}

/// Run all cells of `config` into `config.output_dir`. Configuration problems
/// are reported before anything is written.
pub fn run(config: &ConfigFile, opts: RunOptions) -> Result<Vec<CellOutput>, CliError> {
    config.validate()?;
    let ctx = config.build_context()?;

    let out = &config.output_dir;
    let events_dir = out.join("events");
    fs::create_dir_all(if opts.write_events { &events_dir } else { out })
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;

    let cells: Vec<(usize, usize)> = (0..config.scenarios.len())
        .flat_map(|s| (0..config.replications).map(move |r| (s, r)))
        .collect();
    let events = opts.write_events.then_some(events_dir.as_path());
    let work = |&(s, r): &(usize, usize)| {
        let seed = replication_seed(config.seed, r);
        run_cell(&config.scenarios[s], r, seed, &ctx, events).map(|result| CellOutput {
            scenario: s,
            replication: r,
            result,
        })
    };
    let results: Vec<Result<CellOutput, CliError>> = match opts.execution {
        Execution::Serial => cells.iter().map(work).collect(),
        Execution::Parallel { threads } => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            pool.install(|| cells.par_iter().map(work).collect())
        }
    };
    let outputs = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let rows: Vec<MetricsRow> = outputs
        .iter()
        .flat_map(|c| c.result.days.iter().map(|d| MetricsRow::new(&c.result, c.replication, d)))
        .collect();
    let metrics_path = out.join("metrics.csv");
    write_metrics(&metrics_path, &rows)?;
    let summary = summarize_dir(out)?;
    fs::write(out.join("summary.csv"), summary)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let manifest = Manifest {
        tool: "ftsim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config.semantic_hash(),
        seed: config.seed,
        replications: config.replications,
        scenarios: config.scenarios.iter().map(|s| s.label.clone()).collect(),
        replication_seeds: (0..config.replications)
            .map(|r| replication_seed(config.seed, r))
            .collect(),
        resolved_config: serde_json::to_value(config).map_err(|e| CliError::Runtime(e.to_string()))?,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(out.join("manifest.json"), text + "\n").map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(outputs)
}

/// Summary CSV text recomputed from `dir/metrics.csv`.
pub fn summarize_dir(dir: &Path) -> Result<String, CliError> {
    let path = dir.join("metrics.csv");
    if !path.is_file() {
        return Err(CliError::Input(format!("{} has no metrics.csv", dir.display())));
    }
    to_csv(&summarize_rows(&read_metrics(&path)?)?)
}
