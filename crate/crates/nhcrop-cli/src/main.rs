//! `nhcrop` — deterministic pricing benchmarks for governed data assets.
//!
//! Subcommands: `run-audit` (full experiment grid + CSV tree), `sweep`
//! (parameter sweeps on validation seeds), `gen-assets` (asset tables from
//! text slices or a synthetic spec), `stratify` (decision-relevance buckets
//! only), and `roi-audit` (verification-event log only).
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 invariant
//! violation.

use std::collections::HashSet;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nhcrop::audit::{self, SweepAxis};
use nhcrop::config::{ExperimentConfig, SeedsSpec, SettingEntry};
use nhcrop::env::{generate_table, SynthTableSpec};
use nhcrop::text_proxy::{load_slice_dir, slices_to_table, SliceTableConfig};
use nhcrop::{Error, Result};

#[derive(Parser)]
#[command(name = "nhcrop", version, about = "Online pricing benchmarks under uncertain access costs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct CommonRunArgs {
    /// Experiment config (TOML); defaults to the built-in five-preset config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (falls back to NHCROP_OUT, then the config value).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluation seeds: "0..30" or "0,1,2".
    #[arg(long)]
    seeds: Option<String>,
    /// Worker count; affects wall time only, never output bytes.
    #[arg(long)]
    parallel: Option<usize>,
    /// Restrict to the named setting presets.
    #[arg(long)]
    preset: Vec<String>,
    /// Include the hindsight oracle methods.
    #[arg(long)]
    with_oracles: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every (setting, method, seed) cell and write the CSV tree.
    RunAudit(CommonRunArgs),
    /// Rerun the grid over one axis on validation seeds.
    Sweep {
        #[command(flatten)]
        common: CommonRunArgs,
        /// One of: clip, sigma_coarse, c_ver, tau.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
    },
    /// Build an asset table CSV from text slices or a synthetic spec.
    GenAssets(GenAssetsArgs),
    /// Emit only the decision-relevance bucket table.
    Stratify(CommonRunArgs),
    /// Emit only the verification-event log.
    RoiAudit(CommonRunArgs),
}

#[derive(Args)]
struct GenAssetsArgs {
    /// Directory of slice files (`label<TAB>text` per line).
    #[arg(long, conflicts_with = "synth")]
    slices: Option<PathBuf>,
    /// Generate a synthetic table instead of reading slices.
    #[arg(long)]
    synth: bool,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Number of task kinds.
    #[arg(long, default_value_t = 3)]
    tasks: usize,
    /// Optional lexicon file (one word per line) for the toxicity proxy.
    #[arg(long)]
    word_list: Option<PathBuf>,
    /// Synthetic: number of assets.
    #[arg(long, default_value_t = 120)]
    n_assets: usize,
    /// Synthetic: generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Synthetic: include per-task utility columns.
    #[arg(long)]
    with_utilities: bool,
    /// Synthetic: target utility/cost correlation.
    #[arg(long, default_value_t = 0.0)]
    corr: f64,
    /// Synthetic: std of the coarse-base error.
    #[arg(long, default_value_t = 0.35)]
    coarse_err: f64,
    /// Synthetic: std of the verify-base error.
    #[arg(long, default_value_t = 0.03)]
    verify_err: f64,
}

fn parse_seeds(text: &str) -> Result<SeedsSpec> {
    let t = text.trim();
    if let Some((a, b)) = t.split_once("..") {
        let start: u64 = a
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad seed range start {a:?}")))?;
        let end: u64 = b
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad seed range end {b:?}")))?;
        if end <= start {
            return Err(Error::Config(format!("empty seed range {t:?}")));
        }
        return Ok(SeedsSpec::Range {
            start,
            count: end - start,
        });
    }
    let list: Result<Vec<u64>> = t
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad seed {s:?}")))
        })
        .collect();
    Ok(SeedsSpec::List(list?))
}

fn parse_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad value {s:?}")))
        })
        .collect()
}

/// Load the config and apply CLI overrides.
fn load_config(args: &CommonRunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default_full(),
    };
    if !args.preset.is_empty() {
        let keep: HashSet<&str> = args.preset.iter().map(|s| s.as_str()).collect();
        let existing: Vec<SettingEntry> = cfg
            .settings
            .iter()
            .filter(|e| keep.contains(e.id.as_deref().unwrap_or(e.preset.as_str())))
            .cloned()
            .collect();
        cfg.settings = if existing.len() == keep.len() {
            existing
        } else {
            // Presets not present in the config are instantiated fresh.
            let mut entries = existing;
            let have: HashSet<String> = entries
                .iter()
                .map(|e| e.id.clone().unwrap_or_else(|| e.preset.clone()))
                .collect();
            for name in &args.preset {
                if !have.contains(name.as_str()) {
                    entries.push(SettingEntry {
                        preset: name.clone(),
                        id: None,
                        mode: None,
                        horizon: None,
                        n_task_kinds: None,
                        n_assets: None,
                        sigma_coarse: None,
                        sigma_refined: None,
                        sigma_drift: None,
                        sigma_demand_noise: None,
                        c_ver: None,
                        prices: None,
                        asset_table: None,
                        demand: Default::default(),
                    });
                }
            }
            entries
        };
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = parse_seeds(seeds)?;
    }
    if let Some(p) = args.parallel {
        cfg.parallelism = p;
    }
    if args.with_oracles {
        cfg.with_oracles = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Output directory precedence: `--out`, then `NHCROP_OUT`, then the config.
fn out_dir(args: &CommonRunArgs, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    if let Ok(env) = std::env::var("NHCROP_OUT") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    cfg.output_dir.clone()
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(std::fs::File::create(path)?))
}

fn cmd_run_audit(args: &CommonRunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let dir = out_dir(args, &cfg);
    let outputs = audit::run_audit(&cfg)?;
    audit::write_audit_outputs(&outputs, &dir)?;
    println!(
        "run-audit: {} settings x {} methods x {} seeds, shared clip {}, outputs in {}",
        cfg.settings.len(),
        cfg.method_ids().len(),
        cfg.seeds.expand().len(),
        outputs.chosen_q_max,
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(common: &CommonRunArgs, axis: &str, values: &str) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out_dir(common, &cfg);
    let axis = SweepAxis::parse(axis)?;
    let values = parse_values(values)?;
    let sweep = audit::run_sweep(&cfg, axis, &values)?;
    let path = dir.join(format!("sweep_{}.csv", axis.as_str()));
    nhcrop::report::write_sweep_csv(create(&path)?, axis.as_str(), &sweep.rows, sweep.winner)?;
    if let Some(winner) = sweep.winner {
        println!("sweep {}: selected {}", axis.as_str(), winner);
    }
    println!("sweep rows in {}", path.display());
    Ok(())
}

fn cmd_gen_assets(args: &GenAssetsArgs) -> Result<()> {
    let (table, tasks) = if args.synth {
        let spec = SynthTableSpec {
            n_assets: args.n_assets,
            n_task_kinds: args.tasks,
            seed: args.seed,
            with_utilities: args.with_utilities,
            cost_utility_corr: args.corr,
            coarse_err: args.coarse_err,
            verify_err: args.verify_err,
            ..SynthTableSpec::default()
        };
        (generate_table(&spec)?, args.tasks)
    } else {
        let dir = args
            .slices
            .as_ref()
            .ok_or_else(|| Error::Config("gen-assets needs --slices DIR or --synth".into()))?;
        let slices = load_slice_dir(dir)?;
        let mut cfg = SliceTableConfig {
            n_task_kinds: args.tasks,
            ..SliceTableConfig::default()
        };
        if let Some(path) = &args.word_list {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Data(format!("cannot read word list {}: {e}", path.display())))?;
            cfg.word_list = Some(
                text.lines()
                    .map(|w| w.trim().to_lowercase())
                    .filter(|w| !w.is_empty())
                    .collect(),
            );
        }
        (slices_to_table(&slices, &cfg)?, args.tasks)
    };
    table.write_csv(create(&args.out)?, tasks)?;
    println!(
        "gen-assets: {} rows, {} tasks -> {}",
        table.len(),
        tasks,
        args.out.display()
    );
    Ok(())
}

fn cmd_stratify(args: &CommonRunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let dir = out_dir(args, &cfg);
    let outputs = audit::run_audit(&cfg)?;
    let path = dir.join("tables").join("method_independent_relevance_buckets.csv");
    nhcrop::report::write_buckets_csv(create(&path)?, &outputs.buckets)?;
    println!("stratify: {} bucket rows in {}", outputs.buckets.len(), path.display());
    Ok(())
}

fn cmd_roi_audit(args: &CommonRunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let dir = out_dir(args, &cfg);
    let outputs = audit::run_audit(&cfg)?;
    let path = dir.join("raw").join("verification_events.csv");
    nhcrop::report::write_events_csv(create(&path)?, &outputs.events)?;
    println!(
        "roi-audit: {} verification events in {}",
        outputs.events.len(),
        path.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::RunAudit(args) => cmd_run_audit(args),
        Cmd::Sweep { common, axis, values } => cmd_sweep(common, axis, values),
        Cmd::GenAssets(args) => cmd_gen_assets(args),
        Cmd::Stratify(args) => cmd_stratify(args),
        Cmd::RoiAudit(args) => cmd_roi_audit(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&cli)));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        // Invariant tripwires (information firewall, accounting identities)
        // panic with context; map them onto the invariant exit code.
        Err(_) => ExitCode::from(4),
    }
}
