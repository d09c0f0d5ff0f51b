//! Contextual logistic purchase-probability model with a clipped optimism
//! bonus and safe-revenue price scoring.
//!
//! The model estimates `q(p, c) = sigmoid(theta . phi(x, d, p, c))`, inflates
//! it with a design-matrix confidence bonus, clips the result at `q_max`, and
//! scores each grid price by `clipped_q * (p - c)`. One model is shared per
//! run; updates are single online gradient steps on L2-regularized logistic
//! loss plus a rank-one design-matrix accumulation.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::types::{Asset, PriceGrid, TaskContext};
use crate::{Error, Result};

/// Fixed-length feature vector for one `(context, asset, price, cost)` tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

/// Feature layout: `[intercept, onehot(task_kind), budget, privacy, quality,
/// size, rarity, rel, price, price^2, cost, price*cost, rel*price]` where
/// `rel` is the asset's relevance for the context's task kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMap {
    pub n_task_kinds: usize,
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        12 + self.n_task_kinds
    }

    pub fn featurize(
        &self,
        ctx: &TaskContext,
        asset: &Asset,
        price: f64,
        cost_proxy: f64,
    ) -> Result<FeatureVector> {
        if !(0.0..=1.0).contains(&price) || !price.is_finite() {
            return Err(Error::FeatureOutOfRange(format!("price {price}")));
        }
        if !(0.0..=1.0).contains(&cost_proxy) || !cost_proxy.is_finite() {
            return Err(Error::FeatureOutOfRange(format!("cost {cost_proxy}")));
        }
        if ctx.task_kind >= self.n_task_kinds {
            return Err(Error::FeatureOutOfRange(format!(
                "task_kind {} >= {}",
                ctx.task_kind, self.n_task_kinds
            )));
        }
        let rel = asset
            .relevance_profile
            .get(ctx.task_kind)
            .copied()
            .unwrap_or(0.0);
        let mut v = Vec::with_capacity(self.dim());
        v.push(1.0);
        for k in 0..self.n_task_kinds {
            v.push(if k == ctx.task_kind { 1.0 } else { 0.0 });
        }
        v.push(ctx.budget_level);
        v.push(ctx.privacy_sensitivity);
        v.push(asset.quality);
        v.push(asset.size_norm);
        v.push(asset.rarity);
        v.push(rel);
        v.push(price);
        v.push(price * price);
        v.push(cost_proxy);
        v.push(price * cost_proxy);
        v.push(rel * price);
        Ok(FeatureVector { values: v })
    }
}

/// Config knobs for the demand model.
///
/// `q_max` accepts a number or the string `"inf"`, which disables clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandConfig {
    /// Optimism bonus scale.
    pub beta0: f64,
    /// Online gradient step size.
    pub learn_rate: f64,
    /// Initial design matrix is `ridge * I`.
    pub ridge: f64,
    /// L2 penalty on theta in the online update.
    pub ridge_l2: f64,
    /// Clip ceiling for the optimistic purchase estimate.
    #[serde(
        serialize_with = "serialize_q_max",
        deserialize_with = "deserialize_q_max"
    )]
    pub q_max: f64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        DemandConfig {
            beta0: 0.5,
            learn_rate: 0.3,
            ridge: 1.0,
            ridge_l2: 0.001,
            q_max: 0.8,
        }
    }
}

fn serialize_q_max<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn deserialize_q_max<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Raw::Text(t) => Err(serde::de::Error::custom(format!(
            "q_max must be a number or \"inf\", got {t:?}"
        ))),
    }
}

/// Shared logistic demand model: parameter vector, design matrix, bonus
/// schedule, and clip level.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandModel {
    theta: Vec<f64>,
    v_matrix: Vec<f64>,
    feat: FeatureMap,
    cfg: DemandConfig,
    rounds_seen: u64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl DemandModel {
    pub fn new(cfg: DemandConfig, n_task_kinds: usize) -> Result<Self> {
        if cfg.ridge <= 0.0 {
            return Err(Error::Config(format!("ridge {} must be > 0", cfg.ridge)));
        }
        if cfg.learn_rate <= 0.0 || cfg.beta0 < 0.0 {
            return Err(Error::Config("bad demand config".into()));
        }
        if cfg.q_max.is_nan() || cfg.q_max <= 0.0 {
            return Err(Error::Config(format!("q_max {} must be > 0", cfg.q_max)));
        }
        let feat = FeatureMap { n_task_kinds };
        let d = feat.dim();
        Ok(DemandModel {
            theta: vec![0.0; d],
            v_matrix: linalg::scaled_identity(d, cfg.ridge),
            feat,
            cfg,
            rounds_seen: 0,
        })
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.feat
    }

    pub fn dim(&self) -> usize {
        self.feat.dim()
    }

    pub fn q_max(&self) -> f64 {
        self.cfg.q_max
    }

    pub fn rounds_seen(&self) -> u64 {
        self.rounds_seen
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn v_matrix(&self) -> &[f64] {
        &self.v_matrix
    }

    /// Bonus scale at the current round count: `beta0 * sqrt(ln(t + 2))`.
    pub fn beta_t(&self) -> f64 {
        self.cfg.beta0 * ((self.rounds_seen as f64 + 2.0).ln()).sqrt()
    }

    fn check_dim(&self, phi: &FeatureVector) -> Result<()> {
        if phi.values.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: phi.values.len(),
            });
        }
        Ok(())
    }

    /// Purchase-probability estimate `sigmoid(theta . phi)`, in `(0, 1)`.
    pub fn predict_q(&self, phi: &FeatureVector) -> Result<f64> {
        self.check_dim(phi)?;
        Ok(sigmoid(linalg::dot(&self.theta, &phi.values)))
    }

    /// Factor the design matrix once; the returned scorer answers bonus,
    /// clipped-probability, and price-scan queries against a fixed model
    /// state without re-factoring.
    pub fn scorer(&self) -> Result<Scorer<'_>> {
        let d = self.dim();
        let l = linalg::cholesky(&self.v_matrix, d).ok_or(Error::DegenerateDesign)?;
        Ok(Scorer {
            model: self,
            chol: l,
            beta: self.beta_t(),
        })
    }

    /// Confidence bonus `beta_t * sqrt(phi^T V^{-1} phi)` via a triangular
    /// solve against the Cholesky factor (no explicit inverse).
    pub fn bonus(&self, phi: &FeatureVector) -> Result<f64> {
        self.check_dim(phi)?;
        Ok(self.scorer()?.bonus(phi))
    }

    /// Optimistic purchase estimate clipped to `[0, q_max]`. An infinite
    /// `q_max` leaves the optimistic value unclipped.
    pub fn clipped_q(&self, phi: &FeatureVector) -> Result<f64> {
        self.check_dim(phi)?;
        Ok(self.scorer()?.clipped_q(phi))
    }

    /// Best grid price for the given cost proxy under the clipped
    /// safe-revenue score `clipped_q(p, c) * (p - c)`. Ties break toward the
    /// lowest price. Returns `(price, score)`.
    pub fn best_price(
        &self,
        ctx: &TaskContext,
        asset: &Asset,
        grid: &PriceGrid,
        cost_proxy: f64,
    ) -> Result<(f64, f64)> {
        self.scorer()?.best_price(ctx, asset, grid, cost_proxy)
    }

    /// One observation step: rank-one design update with the features of the
    /// posted price and pricing proxy, then a single gradient step on
    /// L2-regularized logistic loss.
    pub fn update(&mut self, phi_used: &FeatureVector, purchased: bool) -> Result<()> {
        self.check_dim(phi_used)?;
        let d = self.dim();
        linalg::rank_one_update(&mut self.v_matrix, d, &phi_used.values);
        let y = if purchased { 1.0 } else { 0.0 };
        let q = sigmoid(linalg::dot(&self.theta, &phi_used.values));
        let lr = self.cfg.learn_rate;
        let l2 = self.cfg.ridge_l2;
        for i in 0..d {
            self.theta[i] += lr * ((y - q) * phi_used.values[i] - l2 * self.theta[i]);
        }
        self.rounds_seen += 1;
        Ok(())
    }
}

/// Price-scan view over a fixed model state holding the Cholesky factor of
/// the design matrix.
pub struct Scorer<'a> {
    model: &'a DemandModel,
    chol: Vec<f64>,
    beta: f64,
}

impl Scorer<'_> {
    pub fn bonus(&self, phi: &FeatureVector) -> f64 {
        let d = self.model.dim();
        let mut scratch = vec![0.0; d];
        let quad = linalg::inv_quad_form(&self.chol, d, &phi.values, &mut scratch);
        self.beta * quad.max(0.0).sqrt()
    }

    pub fn clipped_q(&self, phi: &FeatureVector) -> f64 {
        let q = sigmoid(linalg::dot(&self.model.theta, &phi.values));
        (q + self.bonus(phi)).clamp(0.0, self.model.cfg.q_max)
    }

    /// Clipped safe-revenue score of one `(price, cost)` candidate.
    pub fn score(
        &self,
        ctx: &TaskContext,
        asset: &Asset,
        price: f64,
        cost_proxy: f64,
    ) -> Result<f64> {
        let phi = self.model.feat.featurize(ctx, asset, price, cost_proxy)?;
        Ok(self.clipped_q(&phi) * (price - cost_proxy))
    }

    pub fn best_price(
        &self,
        ctx: &TaskContext,
        asset: &Asset,
        grid: &PriceGrid,
        cost_proxy: f64,
    ) -> Result<(f64, f64)> {
        let mut best = f64::NEG_INFINITY;
        let mut best_price = grid.prices()[0];
        for &p in grid.prices() {
            let s = self.score(ctx, asset, p, cost_proxy)?;
            if s > best {
                best = s;
                best_price = p;
            }
        }
        Ok((best_price, best))
    }
}
