//! Common-random-number event streams.
//!
//! Every per-round draw (context, asset arrival, cost noises, purchase
//! threshold, demand noise) comes from a counter-based keyed generator over
//! `(setting_id, seed, round, channel)`. Streams are therefore
//! action-independent: every policy on the same `(setting, seed)` faces
//! identical contexts, assets, and costs, any subsequence is recomputable
//! without replaying, and policy-side randomness (Monte Carlo sampling,
//! random-verify coin flips) lives on separate channels that never perturb
//! the environment draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::types::TaskContext;

/// Independent draw channels. Policy-side channels (`PolicyMc`,
/// `RandomVerify`) share the keying scheme but are consumed by policies, not
/// the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Context = 1,
    AssetIndex = 2,
    CoarseNoise = 3,
    RefinedNoise = 4,
    Drift = 5,
    PurchaseU = 6,
    DemandNoise = 7,
    PolicyMc = 8,
    RandomVerify = 9,
    /// Market/asset-table generation for synthetic settings (round 0 only).
    MarketTable = 10,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic generator for one `(setting, seed, round, channel)` cell.
pub fn channel_rng(setting_id: &str, seed: u64, round: u64, channel: Channel) -> ChaCha8Rng {
    let mut key = fnv1a64(setting_id.as_bytes());
    key = splitmix64(key ^ seed);
    key = splitmix64(key ^ round.wrapping_mul(0xA24BAED4963EE407));
    key = splitmix64(key ^ (channel as u64).wrapping_mul(0x9FB21C651E98DF25));
    ChaCha8Rng::seed_from_u64(key)
}

fn normal_draw(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
}

/// All environment randomness for one round, generated solely from
/// `(setting, seed, round)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundEvent {
    pub round: usize,
    pub context: TaskContext,
    pub asset_index: usize,
    /// Coarse-estimate noise draw.
    pub coarse_noise: f64,
    /// Refined-signal noise draw.
    pub refined_noise: f64,
    /// Latent-cost drift draw (synthetic settings).
    pub drift: f64,
    /// Purchase threshold in `[0, 1)`.
    pub purchase_u: f64,
    /// In-logit demand noise (utility-grounded settings).
    pub demand_noise: f64,
}

/// Shape and noise scales needed to generate an event stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub setting_id: String,
    pub horizon: usize,
    pub n_task_kinds: usize,
    pub n_assets: usize,
    pub sigma_coarse: f64,
    pub sigma_refined: f64,
    pub sigma_drift: f64,
    pub sigma_demand_noise: f64,
}

/// Generate one round's event without touching any other round.
pub fn gen_event(spec: &StreamSpec, seed: u64, round: usize) -> RoundEvent {
    let r = round as u64;
    let mut ctx_rng = channel_rng(&spec.setting_id, seed, r, Channel::Context);
    let task_kind = ctx_rng.random_range(0..spec.n_task_kinds);
    let budget_level = ctx_rng.random::<f64>();
    let privacy_sensitivity = ctx_rng.random::<f64>();

    let mut asset_rng = channel_rng(&spec.setting_id, seed, r, Channel::AssetIndex);
    let asset_index = asset_rng.random_range(0..spec.n_assets);

    let mut eps_rng = channel_rng(&spec.setting_id, seed, r, Channel::CoarseNoise);
    let mut eta_rng = channel_rng(&spec.setting_id, seed, r, Channel::RefinedNoise);
    let mut xi_rng = channel_rng(&spec.setting_id, seed, r, Channel::Drift);
    let mut u_rng = channel_rng(&spec.setting_id, seed, r, Channel::PurchaseU);
    let mut dn_rng = channel_rng(&spec.setting_id, seed, r, Channel::DemandNoise);

    RoundEvent {
        round,
        context: TaskContext {
            context_id: r,
            task_kind,
            budget_level,
            privacy_sensitivity,
        },
        asset_index,
        coarse_noise: normal_draw(&mut eps_rng, spec.sigma_coarse),
        refined_noise: normal_draw(&mut eta_rng, spec.sigma_refined),
        drift: normal_draw(&mut xi_rng, spec.sigma_drift),
        purchase_u: u_rng.random::<f64>(),
        demand_noise: normal_draw(&mut dn_rng, spec.sigma_demand_noise),
    }
}

/// Full deterministic stream of length `horizon`.
pub fn gen_event_stream(spec: &StreamSpec, seed: u64) -> Vec<RoundEvent> {
    (0..spec.horizon).map(|t| gen_event(spec, seed, t)).collect()
}
