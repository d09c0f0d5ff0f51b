//! Deterministic CSV emission.
//!
//! Table files use fixed 12-significant-digit decimal formatting; raw
//! per-round logs keep full-precision values so ledger identities can be
//! re-checked from disk. All files are UTF-8 with LF line endings.

use std::io::Write;

use crate::eval::{BucketRow, MethodAggregate, RoiEvent, RunSummary};
use crate::types::{fmt_full, record_csv_row, Trajectory, TRAJECTORY_CSV_HEADER};
use crate::Result;

/// Fixed significant-digit decimal formatting (no exponent notation).
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn fmt_sig12(x: f64) -> String {
    fmt_sig(x, 12)
}

fn opt12(x: Option<f64>) -> String {
    x.map(fmt_sig12).unwrap_or_default()
}

/// `final_setting_method_summary.csv`
pub fn write_summary_csv<W: Write>(mut w: W, rows: &[MethodAggregate]) -> Result<()> {
    writeln!(
        w,
        "setting,method,seeds,rounds,cum_reward_mean,cum_reward_std,mean_reward,verify_freq,p_vs_price_only"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.setting_id,
            r.method_id,
            r.n_seeds,
            r.n_rounds,
            fmt_sig12(r.cum_reward_mean),
            fmt_sig12(r.cum_reward_std),
            fmt_sig12(r.mean_reward),
            fmt_sig12(r.verify_freq),
            opt12(r.p_vs_price_only),
        )?;
    }
    Ok(())
}

/// `method_independent_relevance_buckets.csv`
pub fn write_buckets_csv<W: Write>(mut w: W, rows: &[BucketRow]) -> Result<()> {
    writeln!(w, "setting,bucket,method,mean_reward,n_rounds")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.setting_id,
            r.bucket.as_str(),
            r.method_id,
            fmt_sig12(r.mean_reward),
            r.n_rounds,
        )?;
    }
    Ok(())
}

/// `clip_tuning_summary.csv`
pub fn write_clip_csv<W: Write>(mut w: W, rows: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "q_max,validation_mean_reward")?;
    for &(q, r) in rows {
        writeln!(w, "{},{}", fmt_sig12(q), fmt_sig12(r))?;
    }
    Ok(())
}

/// `seed_level_results.csv`
pub fn write_seed_level_csv<W: Write>(mut w: W, rows: &[RunSummary]) -> Result<()> {
    writeln!(
        w,
        "setting,method,seed,n_rounds,cumulative_reward,mean_reward,verify_freq,\
mean_ver_roi,positive_roi_frac,price_change_frac"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.setting_id,
            r.method_id,
            r.seed,
            r.n_rounds,
            fmt_full(r.cumulative_reward),
            fmt_full(r.mean_reward),
            fmt_full(r.verify_freq),
            r.mean_ver_roi.map(fmt_full).unwrap_or_default(),
            r.positive_roi_frac.map(fmt_full).unwrap_or_default(),
            r.price_change_frac.map(fmt_full).unwrap_or_default(),
        )?;
    }
    Ok(())
}

/// `round_level_results.csv`: the shared per-round schema prefixed by the
/// identifying columns.
pub fn write_round_level_csv<W: Write>(mut w: W, trajectories: &[&Trajectory]) -> Result<()> {
    writeln!(w, "setting,method,seed,{TRAJECTORY_CSV_HEADER}")?;
    for traj in trajectories {
        for rec in &traj.records {
            writeln!(
                w,
                "{},{},{},{}",
                traj.setting_id,
                traj.method_id,
                traj.seed,
                record_csv_row(rec)
            )?;
        }
    }
    Ok(())
}

/// `verification_events.csv`
pub fn write_events_csv<W: Write>(
    mut w: W,
    rows: &[(String, String, u64, RoiEvent)],
) -> Result<()> {
    writeln!(
        w,
        "setting,method,seed,round,price,true_cost,cost_estimate,est_voi,roi,changed_price"
    )?;
    for (setting, method, seed, e) in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            setting,
            method,
            seed,
            e.round,
            fmt_full(e.price),
            fmt_full(e.true_cost),
            fmt_full(e.cost_estimate),
            e.est_voi.map(fmt_full).unwrap_or_default(),
            fmt_full(e.roi),
            if e.changed_price { "1" } else { "0" },
        )?;
    }
    Ok(())
}

/// `(axis_value, method, mean_reward)` sweep rows plus an optional winner.
pub fn write_sweep_csv<W: Write>(
    mut w: W,
    axis: &str,
    rows: &[(f64, String, f64)],
    winner: Option<f64>,
) -> Result<()> {
    writeln!(w, "{axis},method,mean_reward")?;
    for (value, method, reward) in rows {
        writeln!(
            w,
            "{},{},{}",
            fmt_sig12(*value),
            method,
            fmt_sig12(*reward)
        )?;
    }
    if let Some(q) = winner {
        writeln!(w, "{},selected,", fmt_sig12(q))?;
    }
    Ok(())
}
