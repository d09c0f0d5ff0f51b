//! Experiment configuration: one structured TOML file that selects setting
//! presets (with overrides), methods, seeds, and all shared knobs.
//!
//! Validation seeds are disjoint from evaluation seeds by contract: anything
//! tuned (the shared clip value) is resolvable from validation runs alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::belief::SignalNoiseParams;
use crate::demand::DemandConfig;
use crate::env::{DemandCoeffs, EnvMode, SettingConfig};
use crate::policy::{self, PolicySpec};
use crate::types::PriceGrid;
use crate::{Error, Result};

/// Belief-update knobs shared by all policies; the per-setting noise scales
/// complete them into [`SignalNoiseParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeliefConfig {
    pub alpha: f64,
    pub rho_decay: f64,
    pub sigma_ver_floor: f64,
    pub sigma_unver_floor: f64,
}

impl Default for BeliefConfig {
    fn default() -> Self {
        BeliefConfig {
            alpha: 0.3,
            rho_decay: 1.05,
            sigma_ver_floor: 0.02,
            sigma_unver_floor: 0.05,
        }
    }
}

impl BeliefConfig {
    pub fn with_noise(&self, sigma_coarse: f64, sigma_refined: f64) -> SignalNoiseParams {
        SignalNoiseParams {
            sigma_coarse,
            sigma_refined,
            alpha: self.alpha,
            rho_decay: self.rho_decay,
            sigma_ver_floor: self.sigma_ver_floor,
            sigma_unver_floor: self.sigma_unver_floor,
        }
    }
}

/// Default policy parameters applied to every method built from an id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyDefaults {
    pub lambda_risk: f64,
    pub gamma_margin: f64,
    pub mc_samples: usize,
    pub tpiv_threshold: f64,
    pub random_verify_prob: f64,
    pub disable_risk_fallback: bool,
}

impl Default for PolicyDefaults {
    fn default() -> Self {
        PolicyDefaults {
            lambda_risk: policy::DEFAULT_LAMBDA,
            gamma_margin: policy::DEFAULT_GAMMA,
            mc_samples: policy::DEFAULT_MC_SAMPLES,
            tpiv_threshold: policy::DEFAULT_TPIV_THRESHOLD,
            random_verify_prob: policy::DEFAULT_RANDOM_VERIFY_PROB,
            disable_risk_fallback: false,
        }
    }
}

impl PolicyDefaults {
    pub fn build(&self, method_id: &str) -> Result<PolicySpec> {
        let spec = PolicySpec::from_method_id(method_id)?;
        let built = PolicySpec {
            lambda_risk: self.lambda_risk,
            gamma_margin: self.gamma_margin,
            mc_samples: self.mc_samples,
            tpiv_threshold: self.tpiv_threshold,
            random_verify_prob: self.random_verify_prob,
            disable_risk_fallback: self.disable_risk_fallback,
            ..spec
        };
        built.validate()?;
        Ok(built)
    }
}

/// Seed list, either explicit or `{ start, count }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedsSpec {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl SeedsSpec {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            SeedsSpec::List(v) => v.clone(),
            SeedsSpec::Range { start, count } => (*start..*start + *count).collect(),
        }
    }
}

/// Optional per-field patch over a preset's demand coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemandCoeffsPatch {
    pub beta_0: Option<f64>,
    pub beta_rel: Option<f64>,
    pub beta_q: Option<f64>,
    pub beta_u: Option<f64>,
    pub beta_p: Option<f64>,
    pub beta_c: Option<f64>,
    pub rho_a: Option<f64>,
    pub rho_b: Option<f64>,
    pub kap_a: Option<f64>,
    pub kap_b: Option<f64>,
}

impl DemandCoeffsPatch {
    fn apply(&self, mut d: DemandCoeffs) -> DemandCoeffs {
        if let Some(v) = self.beta_0 {
            d.beta_0 = v;
        }
        if let Some(v) = self.beta_rel {
            d.beta_rel = v;
        }
        if let Some(v) = self.beta_q {
            d.beta_q = v;
        }
        if let Some(v) = self.beta_u {
            d.beta_u = v;
        }
        if let Some(v) = self.beta_p {
            d.beta_p = v;
        }
        if let Some(v) = self.beta_c {
            d.beta_c = v;
        }
        if let Some(v) = self.rho_a {
            d.rho_a = v;
        }
        if let Some(v) = self.rho_b {
            d.rho_b = v;
        }
        if let Some(v) = self.kap_a {
            d.kap_a = v;
        }
        if let Some(v) = self.kap_b {
            d.kap_b = v;
        }
        d
    }
}

/// One setting entry: a preset name plus overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingEntry {
    pub preset: String,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub mode: Option<EnvMode>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub n_task_kinds: Option<usize>,
    #[serde(default)]
    pub n_assets: Option<usize>,
    #[serde(default)]
    pub sigma_coarse: Option<f64>,
    #[serde(default)]
    pub sigma_refined: Option<f64>,
    #[serde(default)]
    pub sigma_drift: Option<f64>,
    #[serde(default)]
    pub sigma_demand_noise: Option<f64>,
    #[serde(default)]
    pub c_ver: Option<f64>,
    #[serde(default)]
    pub prices: Option<Vec<f64>>,
    #[serde(default)]
    pub asset_table: Option<PathBuf>,
    #[serde(default)]
    pub demand: DemandCoeffsPatch,
}

impl SettingEntry {
    pub fn resolve(&self) -> Result<SettingConfig> {
        let mut s = SettingConfig::preset(&self.preset)?;
        if let Some(id) = &self.id {
            s.id = id.clone();
        }
        if let Some(m) = self.mode {
            s.mode = m;
        }
        if let Some(v) = self.horizon {
            s.horizon = v;
        }
        if let Some(v) = self.n_task_kinds {
            s.n_task_kinds = v;
        }
        if let Some(v) = self.n_assets {
            s.n_assets = v;
        }
        if let Some(v) = self.sigma_coarse {
            s.sigma_coarse = v;
        }
        if let Some(v) = self.sigma_refined {
            s.sigma_refined = v;
        }
        if let Some(v) = self.sigma_drift {
            s.sigma_drift = v;
        }
        if let Some(v) = self.sigma_demand_noise {
            s.sigma_demand_noise = v;
        }
        if let Some(v) = self.c_ver {
            s.c_ver = v;
        }
        if let Some(p) = &self.prices {
            s.grid = PriceGrid::new(p.clone())?;
        }
        if let Some(p) = &self.asset_table {
            s.asset_table = Some(p.clone());
        }
        s.demand = self.demand.apply(s.demand);
        s.validate()?;
        Ok(s)
    }
}

/// The default non-oracle method roster.
pub const DEFAULT_METHODS: &[&str] = &[
    "price_only",
    "price_only_clip",
    "risk_averse",
    "risk_averse_clip",
    "tpiv",
    "nhcrop",
    "nhcrop_clip",
    "nhcrop_clip_nov",
    "nhcrop_nov",
    "always_verify",
    "random_verify",
];

/// Oracle methods appended by `with_oracles`.
pub const ORACLE_METHODS: &[&str] = &["oracle_free", "oracle_pos_roi", "oracle_price_change"];

fn default_seeds() -> SeedsSpec {
    SeedsSpec::Range { start: 0, count: 30 }
}

fn default_validation_seeds() -> SeedsSpec {
    SeedsSpec::Range {
        start: 1000,
        count: 5,
    }
}

fn default_parallelism() -> usize {
    1
}

fn default_clip_grid() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.5, 0.8, 1.2]
}

fn default_true() -> bool {
    true
}

/// Full experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_seeds")]
    pub seeds: SeedsSpec,
    #[serde(default = "default_validation_seeds")]
    pub validation_seeds: SeedsSpec,
    #[serde(default)]
    pub with_oracles: bool,
    /// Run the clip validation sweep and replace the shared clip value with
    /// the winner before evaluation.
    #[serde(default = "default_true")]
    pub clip_sweep: bool,
    #[serde(default = "default_clip_grid")]
    pub clip_grid: Vec<f64>,
    #[serde(default)]
    pub methods: Option<Vec<String>>,
    #[serde(default)]
    pub demand: DemandConfig,
    #[serde(default)]
    pub belief: BeliefConfig,
    #[serde(default)]
    pub policy: PolicyDefaults,
    pub settings: Vec<SettingEntry>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("toml: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let seeds = self.seeds.expand();
        if seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        let validation = self.validation_seeds.expand();
        for s in &seeds {
            if validation.contains(s) {
                return Err(Error::Config(format!(
                    "seed {s} appears in both evaluation and validation sets; \
                     tuned parameters must be selected on validation seeds only"
                )));
            }
        }
        if self.clip_sweep && validation.is_empty() {
            return Err(Error::Config(
                "clip_sweep requires nonempty validation_seeds".into(),
            ));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        if self.settings.is_empty() {
            return Err(Error::Config("at least one setting is required".into()));
        }
        for m in self.method_ids() {
            self.policy.build(&m)?;
        }
        for entry in &self.settings {
            entry.resolve()?;
        }
        Ok(())
    }

    /// Resolved method roster: explicit list, or the default roster plus
    /// oracles when requested.
    pub fn method_ids(&self) -> Vec<String> {
        match &self.methods {
            Some(list) => list.clone(),
            None => {
                let mut ids: Vec<String> =
                    DEFAULT_METHODS.iter().map(|s| s.to_string()).collect();
                if self.with_oracles {
                    ids.extend(ORACLE_METHODS.iter().map(|s| s.to_string()));
                }
                ids
            }
        }
    }

    pub fn resolved_settings(&self) -> Result<Vec<SettingConfig>> {
        self.settings.iter().map(|e| e.resolve()).collect()
    }

    /// Minimal default config over all five presets.
    pub fn default_full() -> ExperimentConfig {
        ExperimentConfig {
            output_dir: default_output_dir(),
            parallelism: default_parallelism(),
            seeds: default_seeds(),
            validation_seeds: default_validation_seeds(),
            with_oracles: false,
            clip_sweep: true,
            clip_grid: default_clip_grid(),
            methods: None,
            demand: DemandConfig::default(),
            belief: BeliefConfig::default(),
            policy: PolicyDefaults::default(),
            settings: ["syn_high", "rp_base", "rp_high_dv", "ut_base", "ut_high"]
                .iter()
                .map(|p| SettingEntry {
                    preset: p.to_string(),
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
                    demand: DemandCoeffsPatch::default(),
                })
                .collect(),
        }
    }
}
