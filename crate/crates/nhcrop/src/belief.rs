//! Per-asset cost beliefs and their coarse/refined signal updates.
//!
//! The platform keeps a running `(mu, sigma)` estimate of each asset's true
//! cost. Unverified rounds fold the coarse estimate in with an exponential
//! moving average and let `sigma` grow geometrically (floored); verified
//! rounds replace the mean with the refined signal and reset `sigma` to the
//! verified floor.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::HashMap;

use crate::{Error, Result};

/// Noise scales and update rates for the cost-belief model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SignalNoiseParams {
    /// Std of the coarse-estimate noise.
    pub sigma_coarse: f64,
    /// Std of the refined-signal noise; at most `sigma_coarse`.
    pub sigma_refined: f64,
    /// EMA rate for unverified mean updates, in `(0, 1]`.
    pub alpha: f64,
    /// Geometric sigma growth per unverified round, `>= 1`.
    pub rho_decay: f64,
    /// Sigma after a verified round.
    pub sigma_ver_floor: f64,
    /// Lower bound on sigma growth for unverified rounds.
    pub sigma_unver_floor: f64,
}

impl SignalNoiseParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_coarse < 0.0 || self.sigma_refined < 0.0 {
            return Err(Error::Config("signal noise stds must be >= 0".into()));
        }
        if self.sigma_refined > self.sigma_coarse {
            return Err(Error::Config(format!(
                "sigma_refined {} > sigma_coarse {}",
                self.sigma_refined, self.sigma_coarse
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0,1]", self.alpha)));
        }
        if self.rho_decay < 1.0 {
            return Err(Error::Config(format!("rho_decay {} < 1", self.rho_decay)));
        }
        if !(self.sigma_ver_floor > 0.0 && self.sigma_unver_floor > 0.0) {
            return Err(Error::Config("sigma floors must be > 0".into()));
        }
        if self.sigma_ver_floor > self.sigma_unver_floor {
            return Err(Error::Config(format!(
                "sigma_ver_floor {} > sigma_unver_floor {}",
                self.sigma_ver_floor, self.sigma_unver_floor
            )));
        }
        Ok(())
    }
}

/// Running cost estimate for one asset: mean in `[0, 1]`, uncertainty `> 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBelief {
    pub mu: f64,
    pub sigma: f64,
}

/// EMA mean update from a signal in `[0, 1]`: `mu' = (1-alpha)*mu + alpha*z`,
/// clipped to `[0, 1]`. Sigma is unchanged.
pub fn update_mean(belief: CostBelief, signal_value: f64, params: &SignalNoiseParams) -> CostBelief {
    let mu = (1.0 - params.alpha) * belief.mu + params.alpha * signal_value;
    CostBelief {
        mu: mu.clamp(0.0, 1.0),
        sigma: belief.sigma,
    }
}

/// Uncertainty update: verified rounds reset to the verified floor, unverified
/// rounds grow geometrically but never fall below the unverified floor.
pub fn update_sigma(belief: CostBelief, verified: bool, params: &SignalNoiseParams) -> CostBelief {
    let sigma = if verified {
        params.sigma_ver_floor
    } else {
        (params.rho_decay * belief.sigma).max(params.sigma_unver_floor)
    };
    CostBelief {
        mu: belief.mu,
        sigma,
    }
}

/// Predictive distribution over refined cost signals under the current
/// belief: Normal with mean `mu` and std `sqrt(sigma^2 + sigma_refined^2)`,
/// clipped to `[0, 1]` when sampled.
pub fn refined_signal_distribution(belief: &CostBelief, params: &SignalNoiseParams) -> (f64, f64) {
    let std = (belief.sigma * belief.sigma + params.sigma_refined * params.sigma_refined).sqrt();
    (belief.mu, std)
}

/// Draw one clipped sample from the predictive refined-signal distribution.
///
/// A zero-std distribution is a point mass at the mean and consumes no
/// randomness.
pub fn sample_refined_signal(
    belief: &CostBelief,
    params: &SignalNoiseParams,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let (mean, std) = refined_signal_distribution(belief, params);
    if std == 0.0 {
        return mean.clamp(0.0, 1.0);
    }
    let normal = Normal::new(mean, std).expect("finite predictive std");
    normal.sample(rng).clamp(0.0, 1.0)
}

/// Per-asset belief store for one run. Beliefs persist across rounds in which
/// the same asset reappears; separate seeds run fully independent stores.
#[derive(Debug, Clone)]
pub struct BeliefStore {
    params: SignalNoiseParams,
    beliefs: HashMap<u64, CostBelief>,
}

impl BeliefStore {
    pub fn new(params: SignalNoiseParams) -> Self {
        BeliefStore {
            params,
            beliefs: HashMap::new(),
        }
    }

    pub fn params(&self) -> &SignalNoiseParams {
        &self.params
    }

    /// Belief for an asset, initializing from the first observed coarse
    /// estimate on first encounter. The initial sigma is the coarse noise
    /// scale, floored so it stays positive even under zero-noise sweeps.
    pub fn retrieve_or_init(&mut self, asset_id: u64, coarse_cost: f64) -> CostBelief {
        let params = &self.params;
        *self.beliefs.entry(asset_id).or_insert_with(|| CostBelief {
            mu: coarse_cost.clamp(0.0, 1.0),
            sigma: params
                .sigma_coarse
                .max(params.sigma_ver_floor.min(params.sigma_unver_floor)),
        })
    }

    /// Fold an unverified coarse signal in at end of round.
    pub fn observe_coarse(&mut self, asset_id: u64, coarse_cost: f64) {
        if let Some(b) = self.beliefs.get_mut(&asset_id) {
            *b = update_sigma(update_mean(*b, coarse_cost, &self.params), false, &self.params);
        }
    }

    /// Replace the belief with a refined signal: full mean replacement
    /// (unit-rate update) and sigma reset to the verified floor.
    pub fn apply_refined(&mut self, asset_id: u64, refined_signal: f64) {
        if let Some(b) = self.beliefs.get_mut(&asset_id) {
            let replaced = CostBelief {
                mu: refined_signal.clamp(0.0, 1.0),
                sigma: b.sigma,
            };
            *b = update_sigma(replaced, true, &self.params);
        }
    }

    pub fn get(&self, asset_id: u64) -> Option<CostBelief> {
        self.beliefs.get(&asset_id).copied()
    }
}

/// Draw `u in [0, 1)` helper used by policies with private random streams.
pub fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}
