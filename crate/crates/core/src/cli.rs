//! Command-line interface.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::interaction::{test_interaction, TestRecord};
use crate::io::{load_dataset, write_atomic};
use crate::sim::{reproduce_tables, RunOptions};
use crate::surface::{surface_grid, SurfaceModel};

#[derive(Debug, Parser)]
#[command(name = "cvek", version, about = "Kernel ensemble interaction tests")]
struct Cli {
    /// Seed for every random choice (k-fold splits, simulated data).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test the interaction between two covariate groups of a CSV dataset.
    Test {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `data.path`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Write the result record here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate rejection rates over a simulation grid.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Overrides `simulate.reps`.
        #[arg(long)]
        reps: Option<usize>,
        /// Record simplex and PSD checks in the metadata.
        #[arg(long)]
        audit: bool,
    },
    /// Emit predicted exposure-response surfaces over principal components.
    Surface {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Defaults to the first tested group.
        #[arg(long)]
        group_a: Option<String>,
        /// Defaults to the second tested group.
        #[arg(long)]
        group_b: Option<String>,
        /// One-based component indices of group a.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        pc_a: Vec<usize>,
        /// One-based component indices of group b.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        pc_b: Vec<usize>,
        #[arg(long, default_value_t = 25)]
        grid_size: usize,
    },
}

#[derive(Serialize)]
struct TestOutput {
    n: usize,
    dropped: usize,
    #[serde(flatten)]
    record: TestRecord,
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Error::Numerical(format!("cannot serialize output: {e}")))
}

fn run_test(config: &Path, data: Option<&Path>, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let cfg = Config::load(config)?;
    let loaded = load_dataset(&cfg.data_path(data)?, cfg.data_section()?, &cfg.groups)?;
    if loaded.dropped > 0 {
        eprintln!("dropped {} rows with missing values", loaded.dropped);
    }
    let test = cfg.test_spec(&loaded.design)?;
    let result = test_interaction(&loaded.design, &loaded.y, &test, &cfg.model()?, &cfg.test_config(seed)?)?;
    let text = to_json(&TestOutput {
        n: loaded.design.n(),
        dropped: loaded.dropped,
        record: result.record(),
    })?;
    if let Some(path) = out {
        write_atomic(path, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn run_simulate(config: &Path, out_dir: &Path, threads: usize, reps: Option<usize>, audit: bool, seed: Option<u64>) -> Result<()> {
    let cfg = Config::load(config)?;
    let mut grid = cfg
        .simulate
        .clone()
        .ok_or_else(|| Error::Config("missing [simulate] section".into()))?;
    if let Some(s) = seed {
        grid.seed = s;
    }
    if let Some(r) = reps {
        grid.reps = r;
    }
    if threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let (tables, meta) = reproduce_tables(&grid, &cfg.test_config(Some(grid.seed))?, RunOptions { threads, audit })?;
    for t in &tables {
        let path = out_dir.join(t.file_name());
        write_atomic(&path, t.to_csv().as_bytes())?;
        println!("{}", path.display());
    }
    #[derive(Serialize)]
    struct Sidecar<'a> {
        #[serde(flatten)]
        meta: &'a crate::sim::RunMetadata,
        tables: &'a [crate::sim::RateTable],
    }
    let sidecar = to_json(&Sidecar {
        meta: &meta,
        tables: &tables,
    })?;
    write_atomic(&out_dir.join("metadata.json"), sidecar.as_bytes())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_surface(
    config: &Path,
    data: Option<&Path>,
    out_dir: &Path,
    group_a: Option<String>,
    group_b: Option<String>,
    pc_a: &[usize],
    pc_b: &[usize],
    grid_size: usize,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = Config::load(config)?;
    let loaded = load_dataset(&cfg.data_path(data)?, cfg.data_section()?, &cfg.groups)?;
    let test = cfg.test_spec(&loaded.design)?;
    let (ta, tb) = test.pair_names();
    let ga = group_a.unwrap_or(ta);
    let gb = group_b.unwrap_or(tb);
    let specs = cfg.model()?.resolve(&loaded.design, &test, &loaded.y)?;
    let model = SurfaceModel::fit(
        &loaded.design,
        &loaded.y,
        &test,
        &specs,
        &cfg.test_config(seed)?.ensemble,
        cfg.test.interaction_weight,
    )?;
    let mut grids = Vec::new();
    for &a in pc_a {
        for &b in pc_b {
            if a == 0 || b == 0 {
                return Err(Error::Config("PC indices are one-based".into()));
            }
            let grid = surface_grid(&model, &ga, a - 1, &gb, b - 1, grid_size)?;
            let path = out_dir.join(format!("surface_{ga}_pc{a}_{gb}_pc{b}.csv"));
            write_atomic(&path, grid.to_csv()?.as_bytes())?;
            println!("{}", path.display());
            grids.push(grid);
        }
    }
    write_atomic(&out_dir.join("surface_metadata.json"), to_json(&grids)?.as_bytes())?;
    Ok(())
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let seed = cli.seed;
    let outcome = match cli.command {
        Command::Test { config, data, out } => run_test(&config, data.as_deref(), out.as_deref(), seed),
        Command::Simulate {
            config,
            out_dir,
            threads,
            reps,
            audit,
        } => run_simulate(&config, &out_dir, threads, reps, audit, seed),
        Command::Surface {
            config,
            data,
            out_dir,
            group_a,
            group_b,
            pc_a,
            pc_b,
            grid_size,
        } => run_surface(&config, data.as_deref(), &out_dir, group_a, group_b, &pc_a, &pc_b, grid_size, seed),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                2
            } else {
                1
            }
        }
    }
}
