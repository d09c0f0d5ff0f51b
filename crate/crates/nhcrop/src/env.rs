//! Benchmark environment families and the per-round step protocol.
//!
//! Three families share one step protocol: a synthetic market with drifting
//! latent costs, a real-proxy family whose per-asset costs and signal bases
//! come from an asset table, and a utility-grounded family whose demand is
//! driven by per-task asset utilities. Purchase feedback is logistic in
//! relevance/quality (or utility), the posted price, and the platform's own
//! pricing cost proxy — demand reacts to the disclosed risk tier, which
//! couples policy and environment and makes verification potentially
//! demand-relevant.
//!
//! The environment also enforces the information firewall: while a round is
//! being decided, any read of the true cost trips an assertion unless the run
//! is an oracle run.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::event::{channel_rng, Channel, RoundEvent, StreamSpec};
use crate::types::{Asset, Decision, Observation, PriceGrid};
use crate::{Error, Result};

/// Which demand/cost family a setting belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvMode {
    Synthetic,
    RealProxy,
    UtilityGrounded,
}

/// Logistic demand coefficients plus the affine price/cost-sensitivity maps
/// `rho(x) = rho_a + rho_b * budget` and `kappa(x) = kap_a + kap_b * privacy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandCoeffs {
    pub beta_0: f64,
    pub beta_rel: f64,
    pub beta_q: f64,
    pub beta_u: f64,
    pub beta_p: f64,
    pub beta_c: f64,
    pub rho_a: f64,
    pub rho_b: f64,
    pub kap_a: f64,
    pub kap_b: f64,
}

impl DemandCoeffs {
    pub fn rho(&self, budget_level: f64) -> f64 {
        self.rho_a + self.rho_b * budget_level
    }

    pub fn kappa(&self, privacy_sensitivity: f64) -> f64 {
        self.kap_a + self.kap_b * privacy_sensitivity
    }
}

/// Fully-resolved configuration of one benchmark setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingConfig {
    pub id: String,
    pub mode: EnvMode,
    pub horizon: usize,
    pub n_task_kinds: usize,
    /// Number of assets in the generated market (synthetic mode only; table
    /// modes take their size from the asset table).
    pub n_assets: usize,
    pub sigma_coarse: f64,
    pub sigma_refined: f64,
    pub sigma_drift: f64,
    pub sigma_demand_noise: f64,
    pub c_ver: f64,
    pub demand: DemandCoeffs,
    pub grid: PriceGrid,
    /// Asset table path for table modes.
    pub asset_table: Option<std::path::PathBuf>,
}

impl SettingConfig {
    /// Named presets: `syn_high`, `rp_base`, `rp_high_dv`, `ut_base`,
    /// `ut_high`. Every field can be overridden in the experiment config.
    pub fn preset(name: &str) -> Result<SettingConfig> {
        let base = |id: &str, mode: EnvMode| SettingConfig {
            id: id.to_string(),
            mode,
            horizon: 260,
            n_task_kinds: 3,
            n_assets: 40,
            sigma_coarse: 0.15,
            sigma_refined: 0.03,
            sigma_drift: 0.0,
            sigma_demand_noise: 0.0,
            c_ver: 0.02,
            demand: DemandCoeffs {
                beta_0: 0.8,
                beta_rel: 1.2,
                beta_q: 0.8,
                beta_u: 6.0,
                beta_p: 2.0,
                beta_c: 1.2,
                rho_a: 0.5,
                rho_b: 0.8,
                kap_a: 0.4,
                kap_b: 0.8,
            },
            grid: PriceGrid::default_decile(),
            asset_table: None,
        };
        match name {
            // Controlled market with the largest coarse-estimation noise and
            // slow latent-cost drift.
            "syn_high" => {
                let mut s = base("syn_high", EnvMode::Synthetic);
                s.horizon = 420;
                s.sigma_coarse = 0.30;
                s.sigma_drift = 0.01;
                s.demand.beta_c = 1.5;
                s.demand.kap_a = 0.5;
                s.demand.kap_b = 1.0;
                Ok(s)
            }
            "rp_base" => Ok(base("rp_base", EnvMode::RealProxy)),
            // Stress variant where cost information has more leverage on
            // demand: larger cost sensitivity and spread.
            "rp_high_dv" => {
                let mut s = base("rp_high_dv", EnvMode::RealProxy);
                s.demand.beta_c = 2.5;
                s.demand.kap_a = 0.8;
                s.demand.kap_b = 1.2;
                Ok(s)
            }
            "ut_base" => {
                let mut s = base("ut_base", EnvMode::UtilityGrounded);
                s.sigma_demand_noise = 0.3;
                Ok(s)
            }
            "ut_high" => {
                let mut s = base("ut_high", EnvMode::UtilityGrounded);
                s.sigma_demand_noise = 0.3;
                s.demand.beta_c = 2.0;
                s.demand.kap_b = 1.2;
                Ok(s)
            }
            other => Err(Error::Config(format!("unknown setting preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be > 0".into()));
        }
        if self.n_task_kinds == 0 {
            return Err(Error::Config("n_task_kinds must be > 0".into()));
        }
        if self.mode == EnvMode::Synthetic && self.n_assets == 0 {
            return Err(Error::Config("n_assets must be > 0".into()));
        }
        if self.c_ver < 0.0 {
            return Err(Error::Config("c_ver must be >= 0".into()));
        }
        for (name, v) in [
            ("sigma_coarse", self.sigma_coarse),
            ("sigma_refined", self.sigma_refined),
            ("sigma_drift", self.sigma_drift),
            ("sigma_demand_noise", self.sigma_demand_noise),
        ] {
            if v < 0.0 {
                return Err(Error::Config(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Stream shape for CRN generation; `n_assets` must be the resolved
    /// table size.
    pub fn stream_spec(&self, n_assets: usize) -> StreamSpec {
        StreamSpec {
            setting_id: self.id.clone(),
            horizon: self.horizon,
            n_task_kinds: self.n_task_kinds,
            n_assets,
            sigma_coarse: self.sigma_coarse,
            sigma_refined: self.sigma_refined,
            sigma_drift: self.sigma_drift,
            sigma_demand_noise: self.sigma_demand_noise,
        }
    }
}

/// Rows of assets with their true costs, coarse/verify signal bases, and
/// optional per-task utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetTable {
    pub assets: Vec<Asset>,
    pub true_costs: Vec<f64>,
    pub coarse_bases: Vec<f64>,
    pub verify_bases: Vec<f64>,
    /// `utilities[asset_index][task_kind]`, present for utility-grounded use.
    pub utilities: Option<Vec<Vec<f64>>>,
}

impl AssetTable {
    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn validate(&self, n_task_kinds: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Data("asset table is empty".into()));
        }
        for asset in &self.assets {
            asset.validate(n_task_kinds)?;
        }
        for (name, col) in [
            ("true_cost", &self.true_costs),
            ("coarse_base", &self.coarse_bases),
            ("verify_base", &self.verify_bases),
        ] {
            if col.len() != self.assets.len() {
                return Err(Error::Data(format!("{name} column length mismatch")));
            }
            for &v in col.iter() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Data(format!("{name} {v} outside [0,1]")));
                }
            }
        }
        if let Some(utils) = &self.utilities {
            if utils.len() != self.assets.len() {
                return Err(Error::Data("utility rows length mismatch".into()));
            }
            for row in utils {
                if row.len() != n_task_kinds {
                    return Err(Error::Data("utility row width mismatch".into()));
                }
                if row.iter().any(|u| !u.is_finite()) {
                    return Err(Error::Data("non-finite utility".into()));
                }
            }
        }
        Ok(())
    }

    /// Write the table as CSV:
    /// `asset_id,source_kind,quality,size_norm,rarity,rel_0..,true_cost,coarse_base,verify_base[,util_0..]`.
    pub fn write_csv<W: Write>(&self, mut w: W, n_task_kinds: usize) -> Result<()> {
        let mut header = String::from("asset_id,source_kind,quality,size_norm,rarity");
        for k in 0..n_task_kinds {
            header.push_str(&format!(",rel_{k}"));
        }
        header.push_str(",true_cost,coarse_base,verify_base");
        if self.utilities.is_some() {
            for k in 0..n_task_kinds {
                header.push_str(&format!(",util_{k}"));
            }
        }
        writeln!(w, "{header}")?;
        for (i, asset) in self.assets.iter().enumerate() {
            let mut row = format!(
                "{},{},{},{},{}",
                asset.asset_id, asset.source_kind, asset.quality, asset.size_norm, asset.rarity
            );
            for &r in &asset.relevance_profile {
                row.push_str(&format!(",{r}"));
            }
            row.push_str(&format!(
                ",{},{},{}",
                self.true_costs[i], self.coarse_bases[i], self.verify_bases[i]
            ));
            if let Some(utils) = &self.utilities {
                for &u in &utils[i] {
                    row.push_str(&format!(",{u}"));
                }
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<AssetTable> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Data("empty asset table".into()))?
            .map_err(Error::Io)?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let n_rel = cols.iter().filter(|c| c.starts_with("rel_")).count();
        let n_util = cols.iter().filter(|c| c.starts_with("util_")).count();
        if n_rel == 0 {
            return Err(Error::Data("asset table has no rel_ columns".into()));
        }
        let expect = 8 + n_rel + n_util;
        if cols.len() != expect {
            return Err(Error::Data(format!(
                "asset table has {} columns, expected {expect}",
                cols.len()
            )));
        }
        let mut table = AssetTable {
            assets: Vec::new(),
            true_costs: Vec::new(),
            coarse_bases: Vec::new(),
            verify_bases: Vec::new(),
            utilities: if n_util > 0 { Some(Vec::new()) } else { None },
        };
        for (i, line) in lines.enumerate() {
            let line = line.map_err(Error::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != expect {
                return Err(Error::Data(format!("asset table row {} malformed", i + 1)));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Data(format!("bad number {s:?} in asset table")))
            };
            let rel: Result<Vec<f64>> = (0..n_rel).map(|k| num(f[5 + k])).collect();
            table.assets.push(Asset {
                asset_id: f[0]
                    .parse()
                    .map_err(|_| Error::Data("bad asset_id".into()))?,
                source_kind: f[1]
                    .parse()
                    .map_err(|_| Error::Data("bad source_kind".into()))?,
                quality: num(f[2])?,
                size_norm: num(f[3])?,
                rarity: num(f[4])?,
                relevance_profile: rel?,
            });
            table.true_costs.push(num(f[5 + n_rel])?);
            table.coarse_bases.push(num(f[6 + n_rel])?);
            table.verify_bases.push(num(f[7 + n_rel])?);
            if let Some(utils) = &mut table.utilities {
                let row: Result<Vec<f64>> = (0..n_util).map(|k| num(f[8 + n_rel + k])).collect();
                utils.push(row?);
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<AssetTable> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open asset table {}: {e}", path.display())))?;
        AssetTable::read_csv(std::io::BufReader::new(file))
    }
}

/// Generate the synthetic market for one `(setting, seed)`: each seed draws
/// an independent market instance from its own keyed channel.
pub fn synthetic_market(setting: &SettingConfig, seed: u64) -> AssetTable {
    let mut rng = channel_rng(&setting.id, seed, 0, Channel::MarketTable);
    let n = setting.n_assets;
    let mut table = AssetTable {
        assets: Vec::with_capacity(n),
        true_costs: Vec::with_capacity(n),
        coarse_bases: Vec::with_capacity(n),
        verify_bases: Vec::with_capacity(n),
        utilities: None,
    };
    for i in 0..n {
        let relevance_profile = (0..setting.n_task_kinds)
            .map(|_| rng.random::<f64>())
            .collect();
        table.assets.push(Asset {
            asset_id: i as u64,
            source_kind: rng.random_range(0..4),
            quality: rng.random::<f64>(),
            size_norm: rng.random::<f64>(),
            rarity: rng.random::<f64>(),
            relevance_profile,
        });
        // Interior initial costs so slow drift rarely pins at the clip walls.
        let c = 0.05 + 0.90 * rng.random::<f64>();
        table.true_costs.push(c);
        table.coarse_bases.push(c);
        table.verify_bases.push(c);
    }
    table
}

/// Spec for generating a synthetic asset table file (real-proxy or
/// utility-grounded shape) with a controlled cost-utility correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTableSpec {
    pub n_assets: usize,
    pub n_task_kinds: usize,
    pub seed: u64,
    /// Include per-task utility columns.
    pub with_utilities: bool,
    /// Target Pearson correlation between utility and true cost.
    pub cost_utility_corr: f64,
    /// Std of the coarse-base error around the true cost.
    pub coarse_err: f64,
    /// Std of the verify-base error around the true cost.
    pub verify_err: f64,
    pub utility_mean: f64,
    pub utility_scale: f64,
}

impl Default for SynthTableSpec {
    fn default() -> Self {
        SynthTableSpec {
            n_assets: 120,
            n_task_kinds: 3,
            seed: 0,
            with_utilities: false,
            cost_utility_corr: 0.0,
            coarse_err: 0.35,
            verify_err: 0.03,
            utility_mean: 0.05,
            utility_scale: 0.05,
        }
    }
}

/// Generate a synthetic asset table from a [`SynthTableSpec`]. Coarse bases
/// are wide-error stand-ins for cheap metadata; verify bases are tight
/// stand-ins for a lightweight audit.
pub fn generate_table(spec: &SynthTableSpec) -> Result<AssetTable> {
    if spec.n_assets == 0 || spec.n_task_kinds == 0 {
        return Err(Error::Config("table spec must be nonempty".into()));
    }
    if !(-1.0..=1.0).contains(&spec.cost_utility_corr) {
        return Err(Error::Config("cost_utility_corr outside [-1,1]".into()));
    }
    let mut rng = channel_rng("gen_assets", spec.seed, 0, Channel::MarketTable);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let corr = spec.cost_utility_corr;
    let mut table = AssetTable {
        assets: Vec::with_capacity(spec.n_assets),
        true_costs: Vec::with_capacity(spec.n_assets),
        coarse_bases: Vec::with_capacity(spec.n_assets),
        verify_bases: Vec::with_capacity(spec.n_assets),
        utilities: if spec.with_utilities {
            Some(Vec::with_capacity(spec.n_assets))
        } else {
            None
        },
    };
    for i in 0..spec.n_assets {
        let relevance_profile = (0..spec.n_task_kinds)
            .map(|_| rng.random::<f64>())
            .collect();
        table.assets.push(Asset {
            asset_id: i as u64,
            source_kind: rng.random_range(0..4),
            quality: rng.random::<f64>(),
            size_norm: rng.random::<f64>(),
            rarity: rng.random::<f64>(),
            relevance_profile,
        });
        let z_cost: f64 = std_normal.sample(&mut rng);
        let c = (0.5 + 0.22 * z_cost).clamp(0.02, 0.98);
        table.true_costs.push(c);
        table
            .coarse_bases
            .push((c + std_normal.sample(&mut rng) * spec.coarse_err).clamp(0.0, 1.0));
        table
            .verify_bases
            .push((c + std_normal.sample(&mut rng) * spec.verify_err).clamp(0.0, 1.0));
        if let Some(utils) = &mut table.utilities {
            let row = (0..spec.n_task_kinds)
                .map(|_| {
                    let z: f64 = std_normal.sample(&mut rng);
                    let mixed = corr * z_cost + (1.0 - corr * corr).sqrt() * z;
                    spec.utility_mean + spec.utility_scale * mixed
                })
                .collect();
            utils.push(row);
        }
    }
    Ok(table)
}

/// Round phase used by the information firewall.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Deciding,
    Settled,
}

/// Outcome of settling one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settled {
    pub purchased: bool,
    pub reward: f64,
    /// True cost the reward was computed against (pre-drift).
    pub true_cost: f64,
}

/// Mutable environment state for one run: the (possibly drifting) true costs
/// plus the firewall phase.
#[derive(Debug, Clone)]
pub struct EnvState {
    setting: SettingConfig,
    table: AssetTable,
    true_costs: Vec<f64>,
    phase: Phase,
    firewall_armed: bool,
}

impl EnvState {
    pub fn new(setting: SettingConfig, table: AssetTable, firewall_armed: bool) -> Result<Self> {
        table.validate(setting.n_task_kinds)?;
        if setting.mode == EnvMode::UtilityGrounded && table.utilities.is_none() {
            return Err(Error::Data(format!(
                "setting {} needs per-task utilities in its asset table",
                setting.id
            )));
        }
        let true_costs = table.true_costs.clone();
        Ok(EnvState {
            setting,
            table,
            true_costs,
            phase: Phase::Idle,
            firewall_armed,
        })
    }

    pub fn setting(&self) -> &SettingConfig {
        &self.setting
    }

    pub fn table(&self) -> &AssetTable {
        &self.table
    }

    pub fn n_assets(&self) -> usize {
        self.table.len()
    }

    /// Begin a round: surface context, asset, and the clipped coarse cost
    /// estimate. Arms the firewall for the decision window.
    pub fn observe(&mut self, event: &RoundEvent) -> Observation {
        self.phase = Phase::Deciding;
        let asset = self.table.assets[event.asset_index].clone();
        let base = match self.setting.mode {
            EnvMode::Synthetic => self.true_costs[event.asset_index],
            _ => self.table.coarse_bases[event.asset_index],
        };
        Observation {
            context: event.context.clone(),
            asset,
            coarse_cost: (base + event.coarse_noise).clamp(0.0, 1.0),
        }
    }

    /// Refined cost signal revealed on verification, from the event's
    /// refined-noise channel.
    pub fn refined_signal(&self, event: &RoundEvent) -> f64 {
        let base = match self.setting.mode {
            EnvMode::Synthetic => self.true_costs[event.asset_index],
            _ => self.table.verify_bases[event.asset_index],
        };
        (base + event.refined_noise).clamp(0.0, 1.0)
    }

    /// True purchase probability at a posted price given the platform's
    /// disclosed cost proxy. Pure in the environment state.
    pub fn purchase_prob(&self, event: &RoundEvent, price: f64, cost_proxy: f64) -> Result<f64> {
        let asset = &self.table.assets[event.asset_index];
        let ctx = &event.context;
        let d = &self.setting.demand;
        let rho = d.rho(ctx.budget_level);
        let kappa = d.kappa(ctx.privacy_sensitivity);
        let logit = match self.setting.mode {
            EnvMode::Synthetic | EnvMode::RealProxy => {
                d.beta_0 + d.beta_rel * asset.relevance(ctx.task_kind) + d.beta_q * asset.quality
                    - d.beta_p * rho * price
                    - d.beta_c * kappa * cost_proxy
            }
            EnvMode::UtilityGrounded => {
                let utils = self
                    .table
                    .utilities
                    .as_ref()
                    .ok_or(Error::UtilityMissing {
                        task: ctx.task_kind,
                        asset: asset.asset_id,
                    })?;
                let u = *utils[event.asset_index]
                    .get(ctx.task_kind)
                    .ok_or(Error::UtilityMissing {
                        task: ctx.task_kind,
                        asset: asset.asset_id,
                    })?;
                d.beta_0 + d.beta_u * u - d.beta_p * rho * price - d.beta_c * kappa * cost_proxy
                    + event.demand_noise
            }
        };
        Ok(1.0 / (1.0 + (-logit).exp()))
    }

    /// Settle the round: draw purchase feedback against the shared threshold,
    /// pay out the safe net reward, and (synthetic mode) drift the latent
    /// cost. Returns the pre-drift true cost the reward used.
    pub fn settle(&mut self, event: &RoundEvent, decision: &Decision) -> Result<Settled> {
        decision.validate(&self.setting.grid)?;
        let prob = self.purchase_prob(event, decision.price, decision.pricing_cost_proxy)?;
        let purchased = event.purchase_u < prob;
        let true_cost = self.true_costs[event.asset_index];
        let y = if purchased { 1.0 } else { 0.0 };
        let v = if decision.verify { 1.0 } else { 0.0 };
        let reward = y * (decision.price - true_cost) - self.setting.c_ver * v;
        if self.setting.mode == EnvMode::Synthetic {
            self.true_costs[event.asset_index] = (true_cost + event.drift).clamp(0.0, 1.0);
        }
        self.phase = Phase::Settled;
        Ok(Settled {
            purchased,
            reward,
            true_cost,
        })
    }

    /// Current true cost of an asset. Non-oracle runs may only read this
    /// outside the decision window; a read during pricing trips the firewall.
    pub fn true_cost(&self, asset_index: usize) -> f64 {
        assert!(
            !self.firewall_armed || self.phase != Phase::Deciding,
            "information firewall: true cost read during pricing in setting {}",
            self.setting.id
        );
        self.true_costs[asset_index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::gen_event_stream;
    use crate::types::ActionKind;

    fn syn() -> SettingConfig {
        let mut s = SettingConfig::preset("syn_high").unwrap();
        s.horizon = 30;
        s.n_assets = 5;
        s
    }

    fn decision(price: f64, proxy: f64, verify: bool) -> Decision {
        Decision {
            verify,
            action_kind: if verify {
                ActionKind::VerifyThenPrice
            } else {
                ActionKind::Direct
            },
            price,
            pricing_cost_proxy: proxy,
        }
    }

    #[test]
    fn presets_resolve_and_validate() {
        for name in ["syn_high", "rp_base", "rp_high_dv", "ut_base", "ut_high"] {
            let s = SettingConfig::preset(name).unwrap();
            assert!(s.validate().is_ok(), "{name}");
            assert_eq!(s.id, name);
        }
        assert_eq!(SettingConfig::preset("syn_high").unwrap().horizon, 420);
        assert_eq!(SettingConfig::preset("rp_base").unwrap().horizon, 260);
        assert!(SettingConfig::preset("bogus").is_err());
    }

    #[test]
    fn purchase_prob_zero_coefficients_is_half() {
        let mut s = syn();
        s.demand = DemandCoeffs {
            beta_0: 0.0,
            beta_rel: 0.0,
            beta_q: 0.0,
            beta_u: 0.0,
            beta_p: 0.0,
            beta_c: 0.0,
            rho_a: 0.0,
            rho_b: 0.0,
            kap_a: 0.0,
            kap_b: 0.0,
        };
        let table = synthetic_market(&s, 0);
        let env = EnvState::new(s.clone(), table, true).unwrap();
        let ev = &gen_event_stream(&s.stream_spec(5), 0)[0];
        assert_eq!(env.purchase_prob(ev, 0.5, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn purchase_prob_decreases_in_price() {
        let s = syn();
        let table = synthetic_market(&s, 0);
        let env = EnvState::new(s.clone(), table, true).unwrap();
        let ev = &gen_event_stream(&s.stream_spec(5), 0)[0];
        let hi = env.purchase_prob(ev, 1.0, 0.3).unwrap();
        let lo = env.purchase_prob(ev, 0.1, 0.3).unwrap();
        assert!(hi < lo);
    }

    #[test]
    fn purchase_prob_matches_direct_formula() {
        let s = syn();
        let table = synthetic_market(&s, 3);
        let env = EnvState::new(s.clone(), table.clone(), true).unwrap();
        let ev = &gen_event_stream(&s.stream_spec(table.len()), 3)[7];
        let asset = &table.assets[ev.asset_index];
        let d = &s.demand;
        let price = 0.7;
        let proxy = 0.4;
        let logit = d.beta_0
            + d.beta_rel * asset.relevance_profile[ev.context.task_kind]
            + d.beta_q * asset.quality
            - d.beta_p * (d.rho_a + d.rho_b * ev.context.budget_level) * price
            - d.beta_c * (d.kap_a + d.kap_b * ev.context.privacy_sensitivity) * proxy;
        let want = 1.0 / (1.0 + (-logit).exp());
        let got = env.purchase_prob(ev, price, proxy).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn settle_threshold_rule_and_reward() {
        let s = syn();
        let table = synthetic_market(&s, 0);
        let mut env = EnvState::new(s.clone(), table, true).unwrap();
        let events = gen_event_stream(&s.stream_spec(5), 0);
        let ev = &events[0];
        let _obs = env.observe(ev);
        let out = env.settle(ev, &decision(0.8, 0.3, true)).unwrap();
        let prob = env.purchase_prob(ev, 0.8, 0.3).unwrap();
        assert_eq!(out.purchased, ev.purchase_u < prob);
        let y = if out.purchased { 1.0 } else { 0.0 };
        let want = y * (0.8 - out.true_cost) - s.c_ver;
        assert!((out.reward - want).abs() < 1e-15);
    }

    #[test]
    fn settle_rejects_off_grid_price() {
        let s = syn();
        let table = synthetic_market(&s, 0);
        let mut env = EnvState::new(s.clone(), table, true).unwrap();
        let ev = &gen_event_stream(&s.stream_spec(5), 0)[0];
        env.observe(ev);
        assert!(matches!(
            env.settle(ev, &decision(0.55, 0.3, false)),
            Err(Error::PriceOffGrid(_))
        ));
    }

    #[test]
    fn coarse_estimate_zero_noise_equals_base() {
        let mut s = syn();
        s.sigma_coarse = 0.0;
        let table = synthetic_market(&s, 0);
        let mut env = EnvState::new(s.clone(), table.clone(), true).unwrap();
        let ev = &gen_event_stream(&s.stream_spec(5), 0)[0];
        let obs = env.observe(ev);
        assert_eq!(obs.coarse_cost, table.true_costs[ev.asset_index]);
    }

    #[test]
    fn coarse_estimate_clips() {
        let mut s = syn();
        s.n_assets = 1;
        let mut table = synthetic_market(&s, 0);
        table.true_costs[0] = 0.98;
        let mut env = EnvState::new(s.clone(), table, true).unwrap();
        let mut ev = gen_event_stream(&s.stream_spec(1), 0)[0].clone();
        ev.coarse_noise = 0.1;
        let obs = env.observe(&ev);
        assert_eq!(obs.coarse_cost, 1.0);
    }

    #[test]
    fn drift_applies_only_in_synthetic_mode_and_stays_in_range() {
        let s = syn();
        let table = synthetic_market(&s, 1);
        let mut env = EnvState::new(s.clone(), table.clone(), true).unwrap();
        let events = gen_event_stream(&s.stream_spec(5), 1);
        for ev in &events {
            env.observe(ev);
            env.settle(ev, &decision(0.5, 0.5, false)).unwrap();
        }
        for i in 0..5 {
            let c = env.true_cost(i);
            assert!((0.0..=1.0).contains(&c));
        }
        let drifted = (0..5).any(|i| env.true_cost(i) != table.true_costs[i]);
        assert!(drifted, "some latent cost should move over 30 rounds");

        // Table mode: costs are static.
        let mut rp = SettingConfig::preset("rp_base").unwrap();
        rp.horizon = 10;
        let spec = SynthTableSpec {
            n_assets: 6,
            ..SynthTableSpec::default()
        };
        let t2 = generate_table(&spec).unwrap();
        let mut env2 = EnvState::new(rp.clone(), t2.clone(), true).unwrap();
        let evs = gen_event_stream(&rp.stream_spec(6), 0);
        for ev in &evs {
            env2.observe(ev);
            env2.settle(ev, &decision(0.5, 0.5, false)).unwrap();
        }
        for i in 0..6 {
            assert_eq!(env2.true_cost(i), t2.true_costs[i]);
        }
    }

    #[test]
    #[should_panic(expected = "information firewall")]
    fn firewall_trips_on_read_during_pricing() {
        let s = syn();
        let table = synthetic_market(&s, 0);
        let mut env = EnvState::new(s.clone(), table, true).unwrap();
        let ev = &gen_event_stream(&s.stream_spec(5), 0)[0];
        env.observe(ev);
        let _ = env.true_cost(ev.asset_index);
    }

    #[test]
    fn firewall_allows_oracle_and_post_settle_reads() {
        let s = syn();
        let table = synthetic_market(&s, 0);
        let mut armed = EnvState::new(s.clone(), table.clone(), true).unwrap();
        let ev = &gen_event_stream(&s.stream_spec(5), 0)[0];
        armed.observe(ev);
        armed.settle(ev, &decision(0.5, 0.5, false)).unwrap();
        let _ = armed.true_cost(ev.asset_index); // settled: fine

        let mut oracle = EnvState::new(s.clone(), table, false).unwrap();
        oracle.observe(ev);
        let _ = oracle.true_cost(ev.asset_index); // unarmed: fine
    }

    #[test]
    fn table_csv_round_trip() {
        let spec = SynthTableSpec {
            n_assets: 12,
            with_utilities: true,
            cost_utility_corr: 0.4,
            ..SynthTableSpec::default()
        };
        let table = generate_table(&spec).unwrap();
        table.validate(3).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf, 3).unwrap();
        let back = AssetTable::read_csv(&buf[..]).unwrap();
        assert_eq!(table, back);
    }

    #[test]
    fn generated_table_correlation_tracks_spec() {
        let pearson = |x: &[f64], y: &[f64]| {
            let n = x.len() as f64;
            let mx = x.iter().sum::<f64>() / n;
            let my = y.iter().sum::<f64>() / n;
            let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
            let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
            cov / (vx.sqrt() * vy.sqrt())
        };
        for corr in [0.0, 0.5] {
            let spec = SynthTableSpec {
                n_assets: 720,
                with_utilities: true,
                cost_utility_corr: corr,
                ..SynthTableSpec::default()
            };
            let t = generate_table(&spec).unwrap();
            let utils = t.utilities.as_ref().unwrap();
            let u0: Vec<f64> = utils.iter().map(|r| r[0]).collect();
            let r = pearson(&u0, &t.true_costs);
            assert!(
                (r - corr).abs() < 0.15,
                "corr {corr}: sample correlation {r}"
            );
        }
    }

    #[test]
    fn utility_purchase_prob_matches_direct_formula() {
        let ut = SettingConfig::preset("ut_base").unwrap();
        let spec = SynthTableSpec {
            n_assets: 10,
            with_utilities: true,
            cost_utility_corr: 0.2,
            ..SynthTableSpec::default()
        };
        let table = generate_table(&spec).unwrap();
        let env = EnvState::new(ut.clone(), table.clone(), true).unwrap();
        let ev = &gen_event_stream(&ut.stream_spec(10), 5)[3];
        let d = &ut.demand;
        let u = table.utilities.as_ref().unwrap()[ev.asset_index][ev.context.task_kind];
        let price = 0.6;
        let proxy = 0.35;
        let logit = d.beta_0 + d.beta_u * u
            - d.beta_p * (d.rho_a + d.rho_b * ev.context.budget_level) * price
            - d.beta_c * (d.kap_a + d.kap_b * ev.context.privacy_sensitivity) * proxy
            + ev.demand_noise;
        let want = 1.0 / (1.0 + (-logit).exp());
        let got = env.purchase_prob(ev, price, proxy).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn utility_mode_requires_utilities() {
        let ut = SettingConfig::preset("ut_base").unwrap();
        let spec = SynthTableSpec {
            n_assets: 6,
            with_utilities: false,
            ..SynthTableSpec::default()
        };
        let t = generate_table(&spec).unwrap();
        assert!(EnvState::new(ut, t, true).is_err());
    }

    #[test]
    fn utility_demand_monotone_in_utility() {
        let mut ut = SettingConfig::preset("ut_base").unwrap();
        ut.sigma_demand_noise = 0.0;
        let spec = SynthTableSpec {
            n_assets: 2,
            with_utilities: true,
            ..SynthTableSpec::default()
        };
        let mut t = generate_table(&spec).unwrap();
        {
            let utils = t.utilities.as_mut().unwrap();
            utils[0] = vec![0.0, 0.0, 0.0];
            utils[1] = vec![0.5, 0.5, 0.5];
        }
        // Same asset features so only utility differs.
        t.assets[1] = Asset {
            asset_id: 1,
            ..t.assets[0].clone()
        };
        let env = EnvState::new(ut.clone(), t, true).unwrap();
        let mut ev = gen_event_stream(&ut.stream_spec(2), 0)[0].clone();
        ev.demand_noise = 0.0;
        ev.asset_index = 0;
        let p0 = env.purchase_prob(&ev, 0.5, 0.3).unwrap();
        ev.asset_index = 1;
        let p1 = env.purchase_prob(&ev, 0.5, 0.3).unwrap();
        assert!(p1 > p0);
    }
}
