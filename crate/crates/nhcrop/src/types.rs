//! Domain vocabulary shared by all modules: contexts, assets, price grids,
//! decisions, round records, and trajectories.
//!
//! All costs, prices, and qualities are normalized to `[0, 1]` and stored as
//! `f64`; values are immutable after construction and safe to share across
//! concurrent seed runs.

use std::io::{BufRead, Write};

use crate::{Error, Result};

/// Task context observed at the start of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskContext {
    pub context_id: u64,
    /// Categorical task family index in `0..n_task_kinds`.
    pub task_kind: usize,
    /// Buyer budget level in `[0, 1]`; drives price sensitivity.
    pub budget_level: f64,
    /// Privacy sensitivity in `[0, 1]`; drives cost sensitivity.
    pub privacy_sensitivity: f64,
}

impl TaskContext {
    pub fn validate(&self, n_task_kinds: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.budget_level) {
            return Err(Error::Data(format!(
                "budget_level {} outside [0,1]",
                self.budget_level
            )));
        }
        if !(0.0..=1.0).contains(&self.privacy_sensitivity) {
            return Err(Error::Data(format!(
                "privacy_sensitivity {} outside [0,1]",
                self.privacy_sensitivity
            )));
        }
        if self.task_kind >= n_task_kinds {
            return Err(Error::Data(format!(
                "task_kind {} >= n_task_kinds {}",
                self.task_kind, n_task_kinds
            )));
        }
        Ok(())
    }
}

/// Candidate data asset with demand-relevant features.
#[derive(Debug, Clone, PartialEq)]
pub struct Asset {
    pub asset_id: u64,
    /// Categorical source/domain index.
    pub source_kind: usize,
    pub quality: f64,
    pub size_norm: f64,
    pub rarity: f64,
    /// Task-affinity in `[0, 1]`, one entry per task kind.
    pub relevance_profile: Vec<f64>,
}

impl Asset {
    /// Task-asset relevance for the given task kind.
    pub fn relevance(&self, task_kind: usize) -> f64 {
        self.relevance_profile[task_kind]
    }

    pub fn validate(&self, n_task_kinds: usize) -> Result<()> {
        for (name, v) in [
            ("quality", self.quality),
            ("size_norm", self.size_norm),
            ("rarity", self.rarity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Data(format!("asset {name} {v} outside [0,1]")));
            }
        }
        if self.relevance_profile.len() != n_task_kinds {
            return Err(Error::Data(format!(
                "relevance_profile length {} != n_task_kinds {}",
                self.relevance_profile.len(),
                n_task_kinds
            )));
        }
        for &r in &self.relevance_profile {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Data(format!("relevance {r} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Discrete price set shared by all policies.
///
/// Prices are strictly increasing and lie in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceGrid {
    prices: Vec<f64>,
}

impl PriceGrid {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::Config("price grid is empty".into()));
        }
        for w in prices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(format!(
                    "price grid not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        for &p in &prices {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("price {p} outside (0,1]")));
            }
        }
        Ok(PriceGrid { prices })
    }

    /// The default grid `{0.1, 0.2, ..., 1.0}`.
    pub fn default_decile() -> Self {
        PriceGrid {
            prices: (1..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn contains(&self, price: f64) -> bool {
        self.prices.contains(&price)
    }
}

/// What a policy sees before deciding: context, asset, and the coarse cost
/// estimate (already clipped to `[0, 1]` by the environment).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub context: TaskContext,
    pub asset: Asset,
    pub coarse_cost: f64,
}

/// Kind of action a policy committed to in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    Direct,
    Risk,
    VerifyThenPrice,
}

impl ActionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::Direct => "direct",
            ActionKind::Risk => "risk",
            ActionKind::VerifyThenPrice => "verify_then_price",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(ActionKind::Direct),
            "risk" => Ok(ActionKind::Risk),
            "verify_then_price" => Ok(ActionKind::VerifyThenPrice),
            other => Err(Error::Data(format!("unknown action kind {other:?}"))),
        }
    }
}

/// A committed per-round decision.
///
/// `verify` is true iff `action_kind` is [`ActionKind::VerifyThenPrice`], and
/// `pricing_cost_proxy` is the cost value the posted price was scored against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub verify: bool,
    pub action_kind: ActionKind,
    pub price: f64,
    pub pricing_cost_proxy: f64,
}

impl Decision {
    pub fn validate(&self, grid: &PriceGrid) -> Result<()> {
        if !grid.contains(self.price) {
            return Err(Error::PriceOffGrid(self.price));
        }
        if self.verify != (self.action_kind == ActionKind::VerifyThenPrice) {
            return Err(Error::Invariant(format!(
                "verify flag {} inconsistent with action kind {}",
                self.verify,
                self.action_kind.as_str()
            )));
        }
        Ok(())
    }
}

/// Full log of one round: observation, decision, outcome, and diagnostics.
///
/// `belief_mu`/`belief_sigma` snapshot the cost belief at retrieval time,
/// before any refined-signal update. The optional diagnostic fields
/// (`info_value`, `counterfactual_price`, `verification_roi`) are filled by
/// the evaluation layer, never read by policies.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round_index: usize,
    pub observation: Observation,
    pub decision: Decision,
    /// Binary purchase feedback.
    pub purchased: bool,
    /// True cost at settlement time (pre-drift).
    pub true_cost: f64,
    /// Refined signal, present iff the round verified (non-oracle policies).
    pub refined_signal: Option<f64>,
    /// Safe net reward: `y * (price - true_cost) - c_ver * verify`.
    pub reward: f64,
    pub belief_mu: f64,
    pub belief_sigma: f64,
    pub value_direct: f64,
    pub value_risk: f64,
    pub value_verify: Option<f64>,
    pub info_value: Option<f64>,
    pub counterfactual_price: Option<f64>,
    pub verification_roi: Option<f64>,
}

/// Recompute the safe net reward of a record from its raw fields.
pub fn recompute_reward(rec: &RoundRecord, c_ver: f64) -> f64 {
    let y = if rec.purchased { 1.0 } else { 0.0 };
    let v = if rec.decision.verify { 1.0 } else { 0.0 };
    y * (rec.decision.price - rec.true_cost) - c_ver * v
}

/// Per-seed record sequence for one (setting, method, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub setting_id: String,
    pub method_id: String,
    pub seed: u64,
    pub c_ver: f64,
    pub horizon: usize,
    pub records: Vec<RoundRecord>,
}

/// Sum of per-round rewards, in record order.
pub fn cumulative_reward(traj: &Trajectory) -> f64 {
    traj.records.iter().map(|r| r.reward).sum()
}

/// Fraction of rounds that verified. Errors on an empty trajectory.
pub fn verification_frequency(traj: &Trajectory) -> Result<f64> {
    if traj.horizon == 0 || traj.records.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let n = traj.records.iter().filter(|r| r.decision.verify).count();
    Ok(n as f64 / traj.horizon as f64)
}

/// Header of the per-round CSV log.
pub const TRAJECTORY_CSV_HEADER: &str = "round,verify,action_kind,price,purchased,true_cost,\
coarse_cost,refined_signal,reward,mu,sigma,v_dir,v_risk,v_ver,info_value,cf_price,ver_roi";

/// Full-precision decimal formatting that round-trips `f64` exactly.
pub fn fmt_full(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_full).unwrap_or_default()
}

fn parse_f64(field: &str, ctx: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("bad float {field:?} in {ctx}")))
}

fn parse_opt(field: &str, ctx: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, ctx).map(Some)
    }
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn parse_bool(field: &str, ctx: &str) -> Result<bool> {
    match field {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::Data(format!("bad flag {other:?} in {ctx}"))),
    }
}

/// One CSV row for a record, without trailing newline.
pub fn record_csv_row(rec: &RoundRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        rec.round_index,
        fmt_bool(rec.decision.verify),
        rec.decision.action_kind.as_str(),
        fmt_full(rec.decision.price),
        fmt_bool(rec.purchased),
        fmt_full(rec.true_cost),
        fmt_full(rec.observation.coarse_cost),
        fmt_opt(rec.refined_signal),
        fmt_full(rec.reward),
        fmt_full(rec.belief_mu),
        fmt_full(rec.belief_sigma),
        fmt_full(rec.value_direct),
        fmt_full(rec.value_risk),
        fmt_opt(rec.value_verify),
        fmt_opt(rec.info_value),
        fmt_opt(rec.counterfactual_price),
        fmt_opt(rec.verification_roi),
    )
}

impl Trajectory {
    /// Write the per-round CSV log (header plus one row per round).
    ///
    /// Context and asset features are not repeated per round; they live in the
    /// asset table. Numeric fields use full-precision decimal formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRAJECTORY_CSV_HEADER}")?;
        for rec in &self.records {
            writeln!(w, "{}", record_csv_row(rec))?;
        }
        Ok(())
    }

    /// Read back a per-round CSV log written by [`Trajectory::write_csv`].
    ///
    /// The identifying fields (setting, method, seed, fee) are not part of the
    /// per-round schema and must be supplied by the caller. Context and asset
    /// slots of the observation are reconstructed as placeholders; only the
    /// logged numeric columns are meaningful on a loaded trajectory.
    pub fn read_csv<R: BufRead>(
        r: R,
        setting_id: &str,
        method_id: &str,
        seed: u64,
        c_ver: f64,
    ) -> Result<Trajectory> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Data("empty trajectory csv".into()))?
            .map_err(Error::Io)?;
        if header.trim() != TRAJECTORY_CSV_HEADER {
            return Err(Error::Data("unexpected trajectory csv header".into()));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(Error::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let ctx = format!("row {}", i + 1);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 17 {
                return Err(Error::Data(format!(
                    "expected 17 columns, got {} in {ctx}",
                    f.len()
                )));
            }
            let verify = parse_bool(f[1], &ctx)?;
            let record = RoundRecord {
                round_index: f[0]
                    .parse()
                    .map_err(|_| Error::Data(format!("bad round index in {ctx}")))?,
                observation: Observation {
                    context: TaskContext {
                        context_id: 0,
                        task_kind: 0,
                        budget_level: 0.0,
                        privacy_sensitivity: 0.0,
                    },
                    asset: Asset {
                        asset_id: 0,
                        source_kind: 0,
                        quality: 0.0,
                        size_norm: 0.0,
                        rarity: 0.0,
                        relevance_profile: vec![],
                    },
                    coarse_cost: parse_f64(f[6], &ctx)?,
                },
                decision: Decision {
                    verify,
                    action_kind: ActionKind::parse(f[2])?,
                    price: parse_f64(f[3], &ctx)?,
                    pricing_cost_proxy: 0.0,
                },
                purchased: parse_bool(f[4], &ctx)?,
                true_cost: parse_f64(f[5], &ctx)?,
                refined_signal: parse_opt(f[7], &ctx)?,
                reward: parse_f64(f[8], &ctx)?,
                belief_mu: parse_f64(f[9], &ctx)?,
                belief_sigma: parse_f64(f[10], &ctx)?,
                value_direct: parse_f64(f[11], &ctx)?,
                value_risk: parse_f64(f[12], &ctx)?,
                value_verify: parse_opt(f[13], &ctx)?,
                info_value: parse_opt(f[14], &ctx)?,
                counterfactual_price: parse_opt(f[15], &ctx)?,
                verification_roi: parse_opt(f[16], &ctx)?,
            };
            records.push(record);
        }
        Ok(Trajectory {
            setting_id: setting_id.to_string(),
            method_id: method_id.to_string(),
            seed,
            c_ver,
            horizon: records.len(),
            records,
        })
    }

    /// Bit-exact equality on every policy-visible field, ignoring the
    /// estimated-verify-value diagnostic.
    ///
    /// A run whose gate never fires carries verify-value estimates that its
    /// no-verification twin does not compute; everything the policies actually
    /// did must still coincide exactly.
    pub fn decision_equivalent(&self, other: &Trajectory) -> bool {
        self.horizon == other.horizon
            && self.c_ver == other.c_ver
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.round_index == b.round_index
                    && a.decision == b.decision
                    && a.purchased == b.purchased
                    && a.true_cost == b.true_cost
                    && a.refined_signal == b.refined_signal
                    && a.reward == b.reward
                    && a.belief_mu == b.belief_mu
                    && a.belief_sigma == b.belief_sigma
                    && a.observation.coarse_cost == b.observation.coarse_cost
            })
    }
}
