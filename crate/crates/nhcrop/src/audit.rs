//! Orchestration of full experiment audits and parameter sweeps.
//!
//! An audit runs every `(setting, method, seed)` cell, optionally selects the
//! shared clip value on validation seeds first, stratifies rounds by the
//! method-independent decision-relevance score, audits verification ROI, and
//! emits the fixed CSV tree. Identical configs produce byte-identical
//! outputs; the worker count changes wall time only.

use std::collections::BTreeMap;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;

use crate::config::{BeliefConfig, ExperimentConfig, PolicyDefaults};
use crate::demand::DemandConfig;
use crate::env::{synthetic_market, AssetTable, EnvMode, SettingConfig};
use crate::eval::{
    aggregate_summaries, bucket_rows, pooled_info_scores, relevance_buckets, select_clip,
    summarize_trajectory, verification_roi_audit, BucketRow, MethodAggregate, RoiEvent,
    RunSummary,
};
use crate::policy::PolicySpec;
use crate::report;
use crate::runner::{run_cell, CellInputs};
use crate::types::Trajectory;
use crate::{Error, Result};

/// Everything an audit produces, in deterministic order.
#[derive(Debug, Clone)]
pub struct AuditOutputs {
    /// Shared clip value used by all clipped methods (sweep winner or the
    /// configured value).
    pub chosen_q_max: f64,
    /// `(q_max, validation mean reward)` rows, ascending by clip value.
    pub clip_rows: Vec<(f64, f64)>,
    pub summaries: Vec<RunSummary>,
    pub aggregates: Vec<MethodAggregate>,
    pub buckets: Vec<BucketRow>,
    /// `(setting, method, seed, event)` verification events.
    pub events: Vec<(String, String, u64, RoiEvent)>,
    pub trajectories: Vec<Trajectory>,
}

struct ResolvedTables {
    /// Shared file-backed tables per setting id; synthetic settings draw a
    /// fresh market per seed instead.
    shared: BTreeMap<String, AssetTable>,
}

fn resolve_tables(settings: &[SettingConfig]) -> Result<ResolvedTables> {
    let mut shared = BTreeMap::new();
    for s in settings {
        if s.mode == EnvMode::Synthetic {
            continue;
        }
        let path = s.asset_table.as_ref().ok_or_else(|| {
            Error::Data(format!(
                "setting {}: table mode requires an asset_table path",
                s.id
            ))
        })?;
        let table = AssetTable::load(path)?;
        table.validate(s.n_task_kinds)?;
        shared.insert(s.id.clone(), table);
    }
    Ok(ResolvedTables { shared })
}

fn table_for<'a>(
    tables: &'a ResolvedTables,
    setting: &SettingConfig,
    seed: u64,
) -> std::borrow::Cow<'a, AssetTable> {
    match setting.mode {
        EnvMode::Synthetic => std::borrow::Cow::Owned(synthetic_market(setting, seed)),
        _ => std::borrow::Cow::Borrowed(&tables.shared[&setting.id]),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_cells(
    settings: &[SettingConfig],
    tables: &ResolvedTables,
    methods: &[String],
    seeds: &[u64],
    demand: &DemandConfig,
    belief: &BeliefConfig,
    policy: &PolicyDefaults,
    parallelism: usize,
    diagnostics: bool,
) -> Result<Vec<Trajectory>> {
    let specs: Vec<PolicySpec> = methods
        .iter()
        .map(|m| policy.build(m))
        .collect::<Result<_>>()?;
    let mut cells: Vec<(usize, usize, u64)> = Vec::new();
    for (si, _) in settings.iter().enumerate() {
        for (mi, _) in specs.iter().enumerate() {
            for &seed in seeds {
                cells.push((si, mi, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut trajectories = pool.install(|| {
        cells
            .par_iter()
            .map(|&(si, mi, seed)| {
                let setting = &settings[si];
                let spec = &specs[mi];
                let table = table_for(tables, setting, seed);
                let inputs = CellInputs {
                    setting,
                    table: &table,
                    spec,
                    demand,
                    belief,
                    seed,
                    diagnostics,
                };
                // Tripwire assertions inside a cell surface as invariant
                // errors labeled with the offending cell.
                std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run_cell(inputs)))
                    .unwrap_or_else(|payload| {
                        let msg = payload
                            .downcast_ref::<&str>()
                            .map(|s| s.to_string())
                            .or_else(|| payload.downcast_ref::<String>().cloned())
                            .unwrap_or_else(|| "panic".to_string());
                        Err(Error::Invariant(format!(
                            "setting {} method {} seed {seed}: {msg}",
                            setting.id,
                            spec.method_id()
                        )))
                    })
            })
            .collect::<Result<Vec<Trajectory>>>()
    })?;
    trajectories.sort_by(|a, b| {
        (&a.setting_id, &a.method_id, a.seed).cmp(&(&b.setting_id, &b.method_id, b.seed))
    });
    Ok(trajectories)
}

/// Mean per-round reward across a set of trajectories.
fn mean_reward(trajs: &[Trajectory]) -> f64 {
    if trajs.is_empty() {
        return f64::NAN;
    }
    trajs
        .iter()
        .map(|t| crate::types::cumulative_reward(t) / t.horizon as f64)
        .sum::<f64>()
        / trajs.len() as f64
}

/// Validation sweep over clip values: the clipped no-harm method runs on
/// validation seeds at each candidate and the best mean reward wins.
fn clip_validation(
    config: &ExperimentConfig,
    settings: &[SettingConfig],
    tables: &ResolvedTables,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let validation = config.validation_seeds.expand();
    let method = vec!["nhcrop_clip".to_string()];
    let mut rows = Vec::new();
    for &q in grid {
        let demand = DemandConfig {
            q_max: q,
            ..config.demand
        };
        let trajs = run_cells(
            settings,
            tables,
            &method,
            &validation,
            &demand,
            &config.belief,
            &config.policy,
            config.parallelism,
            false,
        )?;
        rows.push((q, mean_reward(&trajs)));
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite clip values"));
    Ok(rows)
}

/// Run the full audit for a config.
pub fn run_audit(config: &ExperimentConfig) -> Result<AuditOutputs> {
    config.validate()?;
    let settings = config.resolved_settings()?;
    let tables = resolve_tables(&settings)?;
    let methods = config.method_ids();
    let seeds = {
        let mut s = config.seeds.expand();
        s.sort_unstable();
        s
    };

    let (chosen_q_max, clip_rows) = if config.clip_sweep && !config.clip_grid.is_empty() {
        let rows = clip_validation(config, &settings, &tables, &config.clip_grid)?;
        (select_clip(&rows)?, rows)
    } else if config.validation_seeds.expand().is_empty() {
        (config.demand.q_max, Vec::new())
    } else {
        let rows = clip_validation(config, &settings, &tables, &[config.demand.q_max])?;
        (config.demand.q_max, rows)
    };

    let demand = DemandConfig {
        q_max: chosen_q_max,
        ..config.demand
    };
    let trajectories = run_cells(
        &settings,
        &tables,
        &methods,
        &seeds,
        &demand,
        &config.belief,
        &config.policy,
        config.parallelism,
        true,
    )?;

    let summaries: Vec<RunSummary> = trajectories
        .iter()
        .map(summarize_trajectory)
        .collect::<Result<_>>()?;
    let aggregates: Vec<MethodAggregate> = aggregate_summaries(&summaries)?;

    let mut buckets = Vec::new();
    for setting in &settings {
        let price_only: Vec<&Trajectory> = trajectories
            .iter()
            .filter(|t| t.setting_id == setting.id && t.method_id == "price_only")
            .collect();
        if price_only.is_empty() {
            continue;
        }
        let scores = pooled_info_scores(&price_only)?;
        let assignment = relevance_buckets(&scores, (1.0 / 3.0, 2.0 / 3.0))?;
        let of_setting: Vec<&Trajectory> = trajectories
            .iter()
            .filter(|t| t.setting_id == setting.id)
            .collect();
        buckets.extend(bucket_rows(&assignment, &of_setting)?);
    }
    buckets.sort_by(|a, b| {
        (&a.setting_id, a.bucket.as_str(), &a.method_id).cmp(&(
            &b.setting_id,
            b.bucket.as_str(),
            &b.method_id,
        ))
    });

    let mut events = Vec::new();
    for traj in &trajectories {
        let audit = verification_roi_audit(traj)?;
        for e in audit.events {
            events.push((traj.setting_id.clone(), traj.method_id.clone(), traj.seed, e));
        }
    }

    Ok(AuditOutputs {
        chosen_q_max,
        clip_rows,
        summaries,
        aggregates,
        buckets,
        events,
        trajectories,
    })
}

/// Write the audit CSV tree under `dir`: `tables/` summaries and `raw/`
/// per-seed, per-round, and event logs.
pub fn write_audit_outputs(out: &AuditOutputs, dir: &Path) -> Result<()> {
    let tables = dir.join("tables");
    let raw = dir.join("raw");
    std::fs::create_dir_all(&tables)?;
    std::fs::create_dir_all(&raw)?;

    let file = |p: &Path| -> Result<BufWriter<std::fs::File>> {
        Ok(BufWriter::new(std::fs::File::create(p)?))
    };

    report::write_summary_csv(
        file(&tables.join("final_setting_method_summary.csv"))?,
        &out.aggregates,
    )?;
    report::write_buckets_csv(
        file(&tables.join("method_independent_relevance_buckets.csv"))?,
        &out.buckets,
    )?;
    report::write_clip_csv(file(&tables.join("clip_tuning_summary.csv"))?, &out.clip_rows)?;
    report::write_seed_level_csv(file(&raw.join("seed_level_results.csv"))?, &out.summaries)?;
    let refs: Vec<&Trajectory> = out.trajectories.iter().collect();
    report::write_round_level_csv(file(&raw.join("round_level_results.csv"))?, &refs)?;
    report::write_events_csv(file(&raw.join("verification_events.csv"))?, &out.events)?;
    Ok(())
}

/// Sweep axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Clip,
    SigmaCoarse,
    CVer,
    Tau,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<SweepAxis> {
        match s {
            "clip" => Ok(SweepAxis::Clip),
            "sigma_coarse" => Ok(SweepAxis::SigmaCoarse),
            "c_ver" => Ok(SweepAxis::CVer),
            "tau" => Ok(SweepAxis::Tau),
            other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Clip => "clip",
            SweepAxis::SigmaCoarse => "sigma_coarse",
            SweepAxis::CVer => "c_ver",
            SweepAxis::Tau => "tau",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutputs {
    pub axis: SweepAxis,
    /// `(axis value, method, mean reward)` rows.
    pub rows: Vec<(f64, String, f64)>,
    /// Selected clip value, for the clip axis.
    pub winner: Option<f64>,
}

/// Run the configured methods on validation seeds at each axis value.
pub fn run_sweep(
    config: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<SweepOutputs> {
    config.validate()?;
    if values.is_empty() {
        return Err(Error::Config("sweep values must be nonempty".into()));
    }
    let validation = config.validation_seeds.expand();
    if validation.is_empty() {
        return Err(Error::Config("sweep requires validation seeds".into()));
    }
    let base_settings = config.resolved_settings()?;
    let methods = config.method_ids();
    let mut rows = Vec::new();
    for &v in values {
        let mut settings = base_settings.clone();
        let mut demand = config.demand;
        let mut policy = config.policy;
        match axis {
            SweepAxis::Clip => demand.q_max = v,
            SweepAxis::SigmaCoarse => {
                for s in &mut settings {
                    s.sigma_coarse = v;
                }
            }
            SweepAxis::CVer => {
                for s in &mut settings {
                    s.c_ver = v;
                }
            }
            SweepAxis::Tau => policy.tpiv_threshold = v,
        }
        let tables = resolve_tables(&settings)?;
        for method in &methods {
            let trajs = run_cells(
                &settings,
                &tables,
                std::slice::from_ref(method),
                &validation,
                &demand,
                &config.belief,
                &policy,
                config.parallelism,
                false,
            )?;
            rows.push((v, method.clone(), mean_reward(&trajs)));
        }
    }
    let winner = if axis == SweepAxis::Clip {
        let nh_rows: Vec<(f64, f64)> = rows
            .iter()
            .filter(|(_, m, _)| m == "nhcrop_clip")
            .map(|&(v, _, r)| (v, r))
            .collect();
        if nh_rows.is_empty() {
            None
        } else {
            Some(select_clip(&nh_rows)?)
        }
    } else {
        None
    };
    Ok(SweepOutputs { axis, rows, winner })
}
