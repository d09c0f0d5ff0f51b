//! Round-loop orchestration for one `(setting, method, seed)` cell.
//!
//! Each round: observe `(context, asset, coarse cost)`, retrieve the asset's
//! cost belief, let the policy choose between pricing now and paying for a
//! refined signal, settle against the common-random-number event, then update
//! the demand model with the features actually priced and fold the round's
//! signal into the belief. The hindsight oracles run a two-pass harness built
//! on the same loop.

use rand_chacha::ChaCha8Rng;

use crate::belief::{BeliefStore, CostBelief, SignalNoiseParams};
use crate::config::BeliefConfig;
use crate::demand::{DemandConfig, DemandModel};
use crate::env::{AssetTable, EnvState, SettingConfig};
use crate::event::{channel_rng, gen_event, Channel, RoundEvent};
use crate::eval::info_value;
use crate::policy::{
    decide_pre_verify, no_verify_branch, price_after_verify, value_direct, value_risk,
    ActionValues, PolicyKind, PolicySpec, PolicyStep,
};
use crate::types::{ActionKind, Decision, RoundRecord, Trajectory};
use crate::{Error, Result};

/// Everything a single cell needs. The same inputs always produce the same
/// trajectory, bit for bit.
#[derive(Debug, Clone, Copy)]
pub struct CellInputs<'a> {
    pub setting: &'a SettingConfig,
    pub table: &'a AssetTable,
    pub spec: &'a PolicySpec,
    pub demand: &'a DemandConfig,
    pub belief: &'a BeliefConfig,
    pub seed: u64,
    /// Fill the post-hoc diagnostic fields (info value, verification ROI).
    pub diagnostics: bool,
}

/// Run one cell. Replay oracles are routed through their two-pass harness.
pub fn run_cell(inputs: CellInputs<'_>) -> Result<Trajectory> {
    if inputs.spec.needs_replay() {
        return oracle_replay(inputs);
    }
    run_loop(inputs, None)
}

/// Signal params seen by the belief model: environment noise scales plus the
/// configured update rates.
fn signal_params(setting: &SettingConfig, belief: &BeliefConfig) -> Result<SignalNoiseParams> {
    let p = belief.with_noise(setting.sigma_coarse, setting.sigma_refined);
    p.validate()?;
    Ok(p)
}

/// Clipped methods share the configured ceiling; unclipped methods run with
/// the sentinel that disables clipping. Nothing else differs.
fn effective_demand(spec: &PolicySpec, demand: &DemandConfig) -> DemandConfig {
    DemandConfig {
        q_max: if spec.clipped {
            demand.q_max
        } else {
            f64::INFINITY
        },
        ..*demand
    }
}

struct LoopState {
    env: EnvState,
    model: DemandModel,
    store: BeliefStore,
}

fn init_state(inputs: &CellInputs<'_>) -> Result<LoopState> {
    let params = signal_params(inputs.setting, inputs.belief)?;
    let model = DemandModel::new(
        effective_demand(inputs.spec, inputs.demand),
        inputs.setting.n_task_kinds,
    )?;
    let env = EnvState::new(
        inputs.setting.clone(),
        inputs.table.clone(),
        !inputs.spec.is_oracle(),
    )?;
    Ok(LoopState {
        env,
        model,
        store: BeliefStore::new(params),
    })
}

fn policy_rngs(setting_id: &str, seed: u64, round: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    (
        channel_rng(setting_id, seed, round as u64, Channel::PolicyMc),
        channel_rng(setting_id, seed, round as u64, Channel::RandomVerify),
    )
}

/// One-shot reward of an alternative decision on the same event and pre-drift
/// true cost: same purchase threshold, no state mutation.
fn counterfactual_reward(
    env: &EnvState,
    event: &RoundEvent,
    decision: &Decision,
    true_cost: f64,
    c_ver: f64,
) -> Result<f64> {
    let prob = env.purchase_prob(event, decision.price, decision.pricing_cost_proxy)?;
    let y = if event.purchase_u < prob { 1.0 } else { 0.0 };
    let v = if decision.verify { 1.0 } else { 0.0 };
    Ok(y * (decision.price - true_cost) - c_ver * v)
}

fn run_loop(inputs: CellInputs<'_>, forced_verify: Option<&[bool]>) -> Result<Trajectory> {
    let setting = inputs.setting;
    let spec = inputs.spec;
    if let Some(schedule) = forced_verify {
        if schedule.len() != setting.horizon {
            return Err(Error::Invariant(format!(
                "verify schedule length {} != horizon {}",
                schedule.len(),
                setting.horizon
            )));
        }
    }
    let stream = setting.stream_spec(inputs.table.len());
    let params = signal_params(setting, inputs.belief)?;
    let mut state = init_state(&inputs)?;
    let grid = &setting.grid;
    let mut records = Vec::with_capacity(setting.horizon);

    for t in 0..setting.horizon {
        let event = gen_event(&stream, inputs.seed, t);
        let obs = state.env.observe(&event);
        let asset_id = obs.asset.asset_id;
        let belief0 = state.store.retrieve_or_init(asset_id, obs.coarse_cost);
        let (mut mc_rng, mut coin_rng) = policy_rngs(&setting.id, inputs.seed, t);

        let (decision, values, refined) = match forced_verify {
            Some(schedule) => forced_step(
                &mut state, spec, grid, &event, &obs, &belief0, schedule[t], asset_id,
            )?,
            None => {
                let oracle_cost = if spec.kind == PolicyKind::OracleFree {
                    Some(state.env.true_cost(event.asset_index))
                } else {
                    None
                };
                let step = decide_pre_verify(
                    spec,
                    &state.model,
                    &obs.context,
                    &obs.asset,
                    grid,
                    &belief0,
                    &params,
                    setting.c_ver,
                    &mut mc_rng,
                    &mut coin_rng,
                    oracle_cost,
                )?;
                match step {
                    PolicyStep::Priced { decision, values } => (decision, values, None),
                    PolicyStep::WantsVerify { values } => {
                        let s = state.env.refined_signal(&event);
                        state.store.apply_refined(asset_id, s);
                        let mu = state.store.get(asset_id).expect("belief present").mu;
                        let d =
                            price_after_verify(&state.model, &obs.context, &obs.asset, grid, mu)?;
                        (d, values, Some(s))
                    }
                }
            }
        };

        let settled = state.env.settle(&event, &decision)?;

        let mut info = None;
        let mut cf_price = None;
        let mut ver_roi = None;
        if inputs.diagnostics {
            info = Some(info_value(
                &state.model,
                &obs.context,
                &obs.asset,
                grid,
                belief0.mu,
                settled.true_cost,
            )?);
            if decision.verify {
                let cf = no_verify_branch(
                    spec,
                    &state.model,
                    &obs.context,
                    &obs.asset,
                    grid,
                    &belief0,
                )?;
                let r_without = counterfactual_reward(
                    &state.env,
                    &event,
                    &cf,
                    settled.true_cost,
                    setting.c_ver,
                )?;
                cf_price = Some(cf.price);
                ver_roi = Some(settled.reward - r_without);
            }
        }

        let phi = state.model.feature_map().featurize(
            &obs.context,
            &obs.asset,
            decision.price,
            decision.pricing_cost_proxy,
        )?;
        state.model.update(&phi, settled.purchased)?;
        if !decision.verify {
            state.store.observe_coarse(asset_id, obs.coarse_cost);
        }

        records.push(RoundRecord {
            round_index: t,
            observation: obs,
            decision,
            purchased: settled.purchased,
            true_cost: settled.true_cost,
            refined_signal: refined,
            reward: settled.reward,
            belief_mu: belief0.mu,
            belief_sigma: belief0.sigma,
            value_direct: values.v_direct,
            value_risk: values.v_risk,
            value_verify: values.v_verify,
            info_value: info,
            counterfactual_price: cf_price,
            verification_roi: ver_roi,
        });
    }

    Ok(Trajectory {
        setting_id: setting.id.clone(),
        method_id: spec.method_id().to_string(),
        seed: inputs.seed,
        c_ver: setting.c_ver,
        horizon: setting.horizon,
        records,
    })
}

type StepOut = (Decision, ActionValues, Option<f64>);

/// One step of a forced-schedule replay: direct pricing from the belief mean,
/// with verification exactly where the schedule says.
#[allow(clippy::too_many_arguments)]
fn forced_step(
    state: &mut LoopState,
    spec: &PolicySpec,
    grid: &crate::types::PriceGrid,
    event: &RoundEvent,
    obs: &crate::types::Observation,
    belief0: &CostBelief,
    verify: bool,
    asset_id: u64,
) -> Result<StepOut> {
    let (p_dir, v_dir) = value_direct(&state.model, &obs.context, &obs.asset, grid, belief0)?;
    let (_, v_risk) = value_risk(
        &state.model,
        &obs.context,
        &obs.asset,
        grid,
        belief0,
        spec.lambda_risk,
    )?;
    let values = ActionValues {
        v_direct: v_dir,
        v_risk,
        v_verify: None,
    };
    if verify {
        let s = state.env.refined_signal(event);
        state.store.apply_refined(asset_id, s);
        let mu = state.store.get(asset_id).expect("belief present").mu;
        let d = price_after_verify(&state.model, &obs.context, &obs.asset, grid, mu)?;
        Ok((d, values, Some(s)))
    } else {
        Ok((
            Decision {
                verify: false,
                action_kind: ActionKind::Direct,
                price: p_dir,
                pricing_cost_proxy: belief0.mu.clamp(0.0, 1.0),
            },
            values,
            None,
        ))
    }
}

/// Prospective per-round verification ROI along a direct-pricing base run.
///
/// At every round, both branches are evaluated one-shot from the current
/// state — verify (refined replacement, price at the refined mean, pay the
/// fee) versus price directly from the belief mean — against the same
/// purchase threshold and pre-drift true cost. The base run then commits the
/// no-verification branch. Returns `(roi, price_changed)` per round.
pub fn prospective_verification_rois(inputs: CellInputs<'_>) -> Result<Vec<(f64, bool)>> {
    let setting = inputs.setting;
    let stream = setting.stream_spec(inputs.table.len());
    let mut state = init_state(&inputs)?;
    let grid = &setting.grid;
    let mut out = Vec::with_capacity(setting.horizon);

    for t in 0..setting.horizon {
        let event = gen_event(&stream, inputs.seed, t);
        let obs = state.env.observe(&event);
        let asset_id = obs.asset.asset_id;
        let belief0 = state.store.retrieve_or_init(asset_id, obs.coarse_cost);

        let (p_dir, _) = value_direct(&state.model, &obs.context, &obs.asset, grid, &belief0)?;
        let no_verify = Decision {
            verify: false,
            action_kind: ActionKind::Direct,
            price: p_dir,
            pricing_cost_proxy: belief0.mu.clamp(0.0, 1.0),
        };

        let s = state.env.refined_signal(&event);
        let with_verify =
            price_after_verify(&state.model, &obs.context, &obs.asset, grid, s.clamp(0.0, 1.0))?;

        let true_cost = state.env.true_cost(event.asset_index);
        let r_with =
            counterfactual_reward(&state.env, &event, &with_verify, true_cost, setting.c_ver)?;
        let r_without =
            counterfactual_reward(&state.env, &event, &no_verify, true_cost, setting.c_ver)?;
        out.push((r_with - r_without, with_verify.price != no_verify.price));

        // Commit the no-verification branch.
        let settled = state.env.settle(&event, &no_verify)?;
        let phi = state.model.feature_map().featurize(
            &obs.context,
            &obs.asset,
            no_verify.price,
            no_verify.pricing_cost_proxy,
        )?;
        state.model.update(&phi, settled.purchased)?;
        state.store.observe_coarse(asset_id, obs.coarse_cost);
    }
    Ok(out)
}

/// Two-pass hindsight oracle: pass one records prospective per-round
/// verification ROI along a direct-pricing base run; pass two replays the
/// same events, verifying exactly where the oracle's criterion held
/// (positive ROI, optionally also a changed price).
pub fn oracle_replay(inputs: CellInputs<'_>) -> Result<Trajectory> {
    if !inputs.spec.needs_replay() {
        return Err(Error::OracleNeedsReplay);
    }
    let rois = prospective_verification_rois(inputs)?;
    let schedule: Vec<bool> = rois
        .iter()
        .map(|&(roi, changed)| match inputs.spec.kind {
            PolicyKind::OraclePositiveRoi => roi > 0.0,
            PolicyKind::OraclePriceChangePositive => roi > 0.0 && changed,
            _ => false,
        })
        .collect();
    run_loop(inputs, Some(&schedule))
}
