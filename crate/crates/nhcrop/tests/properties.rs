//! Property tests for the core invariants.

use nhcrop::belief::{update_mean, update_sigma, CostBelief, SignalNoiseParams};
use nhcrop::demand::{DemandConfig, DemandModel};
use nhcrop::text_proxy::{proxy_cost, ProxyWeights, SliceFeatures, SliceMeta};
use nhcrop::types::{
    ActionKind, Asset, Decision, Observation, RoundRecord, TaskContext, Trajectory,
};
use proptest::prelude::*;

fn params(alpha: f64, rho: f64) -> SignalNoiseParams {
    SignalNoiseParams {
        sigma_coarse: 0.3,
        sigma_refined: 0.05,
        alpha,
        rho_decay: rho,
        sigma_ver_floor: 0.02,
        sigma_unver_floor: 0.05,
    }
}

proptest! {
    #[test]
    fn belief_mean_stays_in_unit_interval(
        mu0 in 0.0..=1.0f64,
        alpha in 0.01..=1.0f64,
        signals in prop::collection::vec(0.0..=1.0f64, 0..200),
    ) {
        let p = params(alpha, 1.05);
        let mut b = CostBelief { mu: mu0, sigma: 0.3 };
        for z in signals {
            b = update_mean(b, z, &p);
            prop_assert!((0.0..=1.0).contains(&b.mu));
        }
    }

    #[test]
    fn belief_sigma_monotone_unverified_and_resets_verified(
        sigma0 in 0.001..=2.0f64,
        rho in 1.0..=1.5f64,
        flags in prop::collection::vec(any::<bool>(), 1..100),
    ) {
        let p = params(0.3, rho);
        let mut b = CostBelief { mu: 0.5, sigma: sigma0 };
        for verified in flags {
            let before = b.sigma;
            b = update_sigma(b, verified, &p);
            if verified {
                prop_assert_eq!(b.sigma, p.sigma_ver_floor);
            } else {
                prop_assert!(b.sigma >= before.min(p.sigma_unver_floor));
                prop_assert!(b.sigma + 1e-15 >= before);
            }
        }
    }

    #[test]
    fn ema_contracts_toward_constant_signal(
        mu0 in 0.0..=1.0f64,
        z in 0.0..=1.0f64,
        alpha in 0.01..=1.0f64,
        steps in 1usize..60,
    ) {
        let p = params(alpha, 1.05);
        let mut b = CostBelief { mu: mu0, sigma: 0.1 };
        let err0 = (mu0 - z).abs();
        for n in 1..=steps {
            b = update_mean(b, z, &p);
            let bound = (1.0 - alpha).powi(n as i32) * err0 + 1e-12;
            prop_assert!((b.mu - z).abs() <= bound);
        }
    }

    #[test]
    fn clipped_q_respects_bounds(
        q_max in 0.05..=1.0f64,
        price in 0.0..=1.0f64,
        cost in 0.0..=1.0f64,
        budget in 0.0..=1.0f64,
        privacy in 0.0..=1.0f64,
        updates in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, any::<bool>()), 0..40),
    ) {
        let cfg = DemandConfig { q_max, ..DemandConfig::default() };
        let mut model = DemandModel::new(cfg, 2).unwrap();
        let ctx = TaskContext { context_id: 0, task_kind: 0, budget_level: budget, privacy_sensitivity: privacy };
        let asset = Asset {
            asset_id: 0, source_kind: 0, quality: 0.5, size_norm: 0.5, rarity: 0.5,
            relevance_profile: vec![0.4, 0.6],
        };
        for (p, c, y) in updates {
            let phi = model.feature_map().featurize(&ctx, &asset, p, c).unwrap();
            model.update(&phi, y).unwrap();
        }
        let phi = model.feature_map().featurize(&ctx, &asset, price, cost).unwrap();
        let q = model.clipped_q(&phi).unwrap();
        prop_assert!(q >= 0.0);
        prop_assert!(q <= q_max);
    }

    #[test]
    fn design_matrix_quadratic_form_nondecreasing(
        probes in prop::collection::vec(-1.0..=1.0f64, 14),
        updates in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, any::<bool>()), 1..30),
    ) {
        let mut model = DemandModel::new(DemandConfig::default(), 2).unwrap();
        let d = model.dim();
        prop_assert_eq!(d, probes.len());
        let ctx = TaskContext { context_id: 0, task_kind: 1, budget_level: 0.3, privacy_sensitivity: 0.9 };
        let asset = Asset {
            asset_id: 0, source_kind: 0, quality: 0.7, size_norm: 0.1, rarity: 0.2,
            relevance_profile: vec![0.5, 0.5],
        };
        let quad = |v: &[f64]| {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += probes[i] * v[i * d + j] * probes[j];
                }
            }
            s
        };
        let mut prev = quad(model.v_matrix());
        for (p, c, y) in updates {
            let phi = model.feature_map().featurize(&ctx, &asset, p, c).unwrap();
            model.update(&phi, y).unwrap();
            let cur = quad(model.v_matrix());
            prop_assert!(cur >= prev - 1e-12);
            prev = cur;
        }
    }

    #[test]
    fn trajectory_csv_round_trips_all_numeric_fields(
        rows in prop::collection::vec(
            (
                0.0..=1.0f64,            // price-ish
                -1.5..=1.5f64,           // reward-ish
                0.0..=1.0f64,            // costs
                prop::option::of(-0.5..=0.5f64),
                any::<bool>(),
                any::<bool>(),
            ),
            0..50,
        )
    ) {
        let records: Vec<RoundRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, &(price, reward, cost, opt, purchased, verify))| RoundRecord {
                round_index: i,
                observation: Observation {
                    context: TaskContext { context_id: i as u64, task_kind: 0, budget_level: 0.0, privacy_sensitivity: 0.0 },
                    asset: Asset { asset_id: 0, source_kind: 0, quality: 0.0, size_norm: 0.0, rarity: 0.0, relevance_profile: vec![] },
                    coarse_cost: cost,
                },
                decision: Decision {
                    verify,
                    action_kind: if verify { ActionKind::VerifyThenPrice } else { ActionKind::Direct },
                    price,
                    pricing_cost_proxy: cost,
                },
                purchased,
                true_cost: cost,
                refined_signal: if verify { Some(cost) } else { None },
                reward,
                belief_mu: cost,
                belief_sigma: 0.1 + price,
                value_direct: reward,
                value_risk: reward * 0.5,
                value_verify: opt,
                info_value: opt.map(|v| v * 3.0),
                counterfactual_price: if verify { Some(price) } else { None },
                verification_roi: if verify { opt } else { None },
            })
            .collect();
        let traj = Trajectory {
            setting_id: "p".into(),
            method_id: "m".into(),
            seed: 1,
            c_ver: 0.02,
            horizon: records.len(),
            records,
        };
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(&buf[..], "p", "m", 1, 0.02).unwrap();
        prop_assert_eq!(traj.records.len(), back.records.len());
        for (a, b) in traj.records.iter().zip(&back.records) {
            prop_assert_eq!(a.decision.price.to_bits(), b.decision.price.to_bits());
            prop_assert_eq!(a.reward.to_bits(), b.reward.to_bits());
            prop_assert_eq!(a.true_cost.to_bits(), b.true_cost.to_bits());
            prop_assert_eq!(a.belief_sigma.to_bits(), b.belief_sigma.to_bits());
            prop_assert_eq!(a.value_verify, b.value_verify);
            prop_assert_eq!(a.info_value, b.info_value);
            prop_assert_eq!(a.verification_roi, b.verification_roi);
            prop_assert_eq!(a.purchased, b.purchased);
            prop_assert_eq!(a.decision.verify, b.decision.verify);
        }
    }

    #[test]
    fn proxy_cost_monotone_in_every_group(
        base in prop::collection::vec(0.0..=1.0f64, 8),
        bump in 0.0..=1.0f64,
        which in 0usize..8,
    ) {
        let mk = |v: &[f64]| SliceFeatures {
            sensitive_rate: v[0],
            dup_ratio: v[1],
            rep_ngram_ratio: v[2],
            near_dup_score: v[3],
            tox_proxy: v[4],
            license_prior: v[5],
            quality_risk: v[6],
            rarity_risk: v[7],
            meta: SliceMeta { n_docs: 10, avg_len: 30.0, label_entropy: 0.5, class_imbalance: 0.5 },
        };
        let w = ProxyWeights::default();
        let c0 = proxy_cost(&mk(&base), &w).unwrap();
        let mut bumped = base.clone();
        bumped[which] = (bumped[which] + bump).min(1.0);
        let c1 = proxy_cost(&mk(&bumped), &w).unwrap();
        prop_assert!(c1 + 1e-15 >= c0);
    }
}
