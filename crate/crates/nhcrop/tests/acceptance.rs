//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see details).

use std::collections::HashSet;
use std::time::Instant;

use nhcrop::config::{BeliefConfig, ExperimentConfig, SeedsSpec};
use nhcrop::demand::{DemandConfig, DemandModel, FeatureVector};
use nhcrop::env::{generate_table, synthetic_market, AssetTable, SettingConfig, SynthTableSpec};
use nhcrop::eval::{paired_directional_test, select_clip};
use nhcrop::event::{channel_rng, gen_event, Channel};
use nhcrop::policy::{value_direct, value_verify_mc, PolicySpec};
use nhcrop::runner::{run_cell, CellInputs};
use nhcrop::types::{cumulative_reward, recompute_reward, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: std::ops::Range<u64> = 0..30;

fn criterion(id: &str, ok: bool, detail: &str) {
    println!(
        "acceptance {id}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {id} failed: {detail}");
}

fn rp_style_setting() -> (SettingConfig, AssetTable) {
    let mut s = SettingConfig::preset("rp_base").unwrap();
    s.asset_table = None;
    let table = generate_table(&SynthTableSpec {
        n_assets: 120,
        seed: 7,
        ..SynthTableSpec::default()
    })
    .unwrap();
    (s, table)
}

fn ut_style_setting() -> (SettingConfig, AssetTable) {
    let mut s = SettingConfig::preset("ut_base").unwrap();
    s.asset_table = None;
    let table = generate_table(&SynthTableSpec {
        n_assets: 120,
        seed: 9,
        with_utilities: true,
        cost_utility_corr: 0.15,
        ..SynthTableSpec::default()
    })
    .unwrap();
    (s, table)
}

fn run_grid(
    setting: &SettingConfig,
    shared_table: Option<&AssetTable>,
    method: &str,
    seeds: impl Iterator<Item = u64>,
    diagnostics: bool,
) -> Vec<Trajectory> {
    let spec = PolicySpec::from_method_id(method).unwrap();
    seeds
        .map(|seed| {
            let owned;
            let table = match shared_table {
                Some(t) => t,
                None => {
                    owned = synthetic_market(setting, seed);
                    &owned
                }
            };
            run_cell(CellInputs {
                setting,
                table,
                spec: &spec,
                demand: &DemandConfig::default(),
                belief: &BeliefConfig::default(),
                seed,
                diagnostics,
            })
            .unwrap()
        })
        .collect()
}

fn cums(trajs: &[Trajectory]) -> Vec<f64> {
    trajs.iter().map(cumulative_reward).collect()
}

#[test]
fn c01_ordering_syn_high() {
    let start = Instant::now();
    let setting = SettingConfig::preset("syn_high").unwrap();
    assert_eq!(setting.horizon, 420);
    let price_only = run_grid(&setting, None, "price_only", SEEDS, false);
    let nh_clip = run_grid(&setting, None, "nhcrop_clip", SEEDS, false);
    let t = paired_directional_test(&cums(&nh_clip), &cums(&price_only)).unwrap();
    let elapsed = start.elapsed();
    criterion(
        "01 ordering_syn_high",
        t.mean_gap > 0.0 && t.p_value < 0.05 && elapsed.as_secs_f64() < 120.0,
        &format!(
            "gap {:+.3}, p {:.2e}, {:.1}s",
            t.mean_gap,
            t.p_value,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c02_oracle_dominance() {
    let syn = SettingConfig::preset("syn_high").unwrap();
    let oracle_syn = run_grid(&syn, None, "oracle_free", SEEDS, false);
    let price_syn = run_grid(&syn, None, "price_only", SEEDS, false);
    let t_syn = paired_directional_test(&cums(&oracle_syn), &cums(&price_syn)).unwrap();

    let (rp, rp_table) = rp_style_setting();
    let oracle_rp = run_grid(&rp, Some(&rp_table), "oracle_free", SEEDS, false);
    let price_rp = run_grid(&rp, Some(&rp_table), "price_only", SEEDS, false);
    let t_rp = paired_directional_test(&cums(&oracle_rp), &cums(&price_rp)).unwrap();

    criterion(
        "02 oracle_dominance",
        t_syn.mean_gap > 0.0 && t_syn.p_value < 0.05 && t_rp.mean_gap > 0.0 && t_rp.p_value < 0.05,
        &format!(
            "syn gap {:+.3} p {:.2e}; rp gap {:+.3} p {:.2e}",
            t_syn.mean_gap, t_syn.p_value, t_rp.mean_gap, t_rp.p_value
        ),
    );
}

#[test]
fn c03_no_harm_gate_equivalences() {
    let setting = SettingConfig::preset("syn_high").unwrap();
    let table = synthetic_market(&setting, 3);
    let demand = DemandConfig::default();
    let belief = BeliefConfig::default();
    let mk = |spec: &PolicySpec, demand: &DemandConfig| {
        run_cell(CellInputs {
            setting: &setting,
            table: &table,
            spec,
            demand,
            belief: &belief,
            seed: 3,
            diagnostics: true,
        })
        .unwrap()
    };

    // Infinite margin == no-verification ablation, bit for bit.
    let gamma_inf = PolicySpec {
        gamma_margin: f64::INFINITY,
        ..PolicySpec::from_method_id("nhcrop_clip").unwrap()
    };
    let nov = PolicySpec::from_method_id("nhcrop_clip_nov").unwrap();
    let eq_gamma = mk(&gamma_inf, &demand).records == mk(&nov, &demand).records;

    // Infinite ceiling makes the clipped flag inert, bit for bit.
    let unclipped_demand = DemandConfig {
        q_max: f64::INFINITY,
        ..demand
    };
    let eq_clip = mk(
        &PolicySpec::from_method_id("nhcrop_clip").unwrap(),
        &unclipped_demand,
    )
    .records
        == mk(
            &PolicySpec::from_method_id("nhcrop").unwrap(),
            &unclipped_demand,
        )
        .records;

    // A finite margin so large the gate never fires must equal the ablation
    // on every policy-visible field.
    let gamma_large = PolicySpec {
        gamma_margin: 10.0,
        ..PolicySpec::from_method_id("nhcrop_clip").unwrap()
    };
    let never = mk(&gamma_large, &demand);
    let never_fired = never.records.iter().all(|r| !r.decision.verify);
    let eq_never = never.decision_equivalent(&mk(&nov, &demand));

    criterion(
        "03 no_harm_gate_equivalences",
        eq_gamma && eq_clip && never_fired && eq_never,
        &format!("gamma_inf {eq_gamma}, clip_inert {eq_clip}, never_fires {eq_never}"),
    );
}

#[test]
fn c04_reward_ledger_identity() {
    let syn = SettingConfig::preset("syn_high").unwrap();
    let (rp, rp_table) = rp_style_setting();
    let (ut, ut_table) = ut_style_setting();
    let mut rounds = 0usize;
    let mut exact = true;
    for method in ["price_only", "nhcrop_clip", "always_verify", "oracle_pos_roi"] {
        for (setting, table) in [(&syn, None), (&rp, Some(&rp_table)), (&ut, Some(&ut_table))] {
            for traj in run_grid(setting, table, method, SEEDS, false) {
                for rec in &traj.records {
                    rounds += 1;
                    if recompute_reward(rec, traj.c_ver).to_bits() != rec.reward.to_bits() {
                        exact = false;
                    }
                }
            }
        }
    }
    criterion(
        "04 reward_ledger_identity",
        exact && rounds >= 100_000,
        &format!("{rounds} rounds, bit-exact {exact}"),
    );
}

#[test]
fn c05_degenerate_voi() {
    let model = DemandModel::new(DemandConfig::default(), 3).unwrap();
    let grid = nhcrop::types::PriceGrid::default_decile();
    let ctx = nhcrop::types::TaskContext {
        context_id: 0,
        task_kind: 1,
        budget_level: 0.6,
        privacy_sensitivity: 0.4,
    };
    let asset = nhcrop::types::Asset {
        asset_id: 0,
        source_kind: 0,
        quality: 0.7,
        size_norm: 0.5,
        rarity: 0.3,
        relevance_profile: vec![0.2, 0.8, 0.5],
    };
    let params = BeliefConfig::default().with_noise(0.0, 0.0);
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for mu in [0.0, 0.23, 0.4, 0.77, 1.0] {
        let belief = nhcrop::belief::CostBelief { mu, sigma: 0.0 };
        let (_, v_dir) = value_direct(&model, &ctx, &asset, &grid, &belief).unwrap();
        for k in [1usize, 3, 64, 1024] {
            let mut rng = channel_rng("acc", 0, k as u64, Channel::PolicyMc);
            let v = value_verify_mc(
                &model, &ctx, &asset, &grid, &belief, &params, k, 0.02, &mut rng,
            )
            .unwrap();
            let err = (v - (v_dir - 0.02)).abs();
            worst = worst.max(err);
            if err > 1e-12 {
                ok = false;
            }
        }
    }
    criterion("05 degenerate_voi", ok, &format!("max |err| {worst:.2e}"));
}

#[test]
fn c06_demand_model_numerics() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let n_tasks = 3;

    // Gradient versus central finite differences on the regularized log loss.
    let mut grad_ok = true;
    let mut grad_worst: f64 = 0.0;
    for _ in 0..100 {
        let demand = DemandConfig {
            learn_rate: 1.0,
            ridge_l2: 0.01,
            ..DemandConfig::default()
        };
        let mut model = DemandModel::new(demand, n_tasks).unwrap();
        let d = model.dim();
        let theta0: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let phi = FeatureVector {
            values: (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
        };
        let y = if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
        let loss = |theta: &[f64]| -> f64 {
            let z: f64 = theta.iter().zip(&phi.values).map(|(a, b)| a * b).sum();
            let q = 1.0 / (1.0 + (-z).exp());
            let nll = -(y * q.ln() + (1.0 - y) * (1.0 - q).ln());
            nll + 0.005 * theta.iter().map(|t| t * t).sum::<f64>()
        };
        // Drive theta to the target exactly: from zero with lr=1 and y=1 the
        // update is 0.5 * phi, and halving a doubled vector is bit-exact.
        let setup = FeatureVector {
            values: theta0.iter().map(|t| 2.0 * t).collect(),
        };
        model.update(&setup, true).unwrap();
        assert_eq!(model.theta(), &theta0[..]);
        // The model's update direction with lr=1 equals the negative
        // gradient of this loss.
        model.update(&phi, y == 1.0).unwrap();
        let grad_model: Vec<f64> = model
            .theta()
            .iter()
            .zip(&theta0)
            .map(|(after, before)| -(after - before))
            .collect();
        let h = 1e-6;
        let fd: Vec<f64> = (0..d)
            .map(|i| {
                let mut up = theta0.clone();
                up[i] += h;
                let mut dn = theta0.clone();
                dn[i] -= h;
                (loss(&up) - loss(&dn)) / (2.0 * h)
            })
            .collect();
        // Relative to the gradient scale, so near-zero components do not
        // amplify finite-difference rounding noise.
        let scale = fd.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-12);
        for i in 0..d {
            let rel = (grad_model[i] - fd[i]).abs() / scale;
            grad_worst = grad_worst.max(rel);
            if rel > 1e-5 {
                grad_ok = false;
            }
        }
    }

    // Bonus through the factored solve against an explicit dense inverse.
    let mut bonus_ok = true;
    let mut bonus_worst: f64 = 0.0;
    for trial in 0..25 {
        let mut model = DemandModel::new(DemandConfig::default(), n_tasks).unwrap();
        for _ in 0..(trial * 3 + 1) {
            let phi = FeatureVector {
                values: (0..model.dim())
                    .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                    .collect(),
            };
            model.update(&phi, rng.random::<f64>() < 0.5).unwrap();
        }
        let d = model.dim();
        let inv = gauss_jordan_inverse(model.v_matrix(), d);
        let phi = FeatureVector {
            values: (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
        };
        let got = model.bonus(&phi).unwrap();
        let mut quad = 0.0;
        for i in 0..d {
            for j in 0..d {
                quad += phi.values[i] * inv[i * d + j] * phi.values[j];
            }
        }
        let want = model.beta_t() * quad.max(0.0).sqrt();
        let rel = (got - want).abs() / want.abs().max(1e-12);
        bonus_worst = bonus_worst.max(rel);
        if rel > 1e-9 {
            bonus_ok = false;
        }
    }

    // Grid argmax against an independent exhaustive scan, same tie-break.
    let grid = nhcrop::types::PriceGrid::default_decile();
    let mut scan_ok = true;
    for trial in 0..1000 {
        let q_max = if trial % 3 == 0 { f64::INFINITY } else { 0.8 };
        let mut model =
            DemandModel::new(DemandConfig { q_max, ..DemandConfig::default() }, n_tasks).unwrap();
        for _ in 0..(trial % 7) {
            let phi = FeatureVector {
                values: (0..model.dim())
                    .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                    .collect(),
            };
            model.update(&phi, rng.random::<f64>() < 0.5).unwrap();
        }
        let ctx = nhcrop::types::TaskContext {
            context_id: trial as u64,
            task_kind: trial % n_tasks,
            budget_level: rng.random(),
            privacy_sensitivity: rng.random(),
        };
        let asset = nhcrop::types::Asset {
            asset_id: trial as u64,
            source_kind: 0,
            quality: rng.random(),
            size_norm: rng.random(),
            rarity: rng.random(),
            relevance_profile: (0..n_tasks).map(|_| rng.random()).collect(),
        };
        let cost: f64 = rng.random();
        let (p, s) = model.best_price(&ctx, &asset, &grid, cost).unwrap();
        let mut want_p = f64::NAN;
        let mut want_s = f64::NEG_INFINITY;
        for &cand in grid.prices() {
            let phi = model.feature_map().featurize(&ctx, &asset, cand, cost).unwrap();
            let q = model.predict_q(&phi).unwrap();
            let b = model.bonus(&phi).unwrap();
            let score = (q + b).clamp(0.0, q_max) * (cand - cost);
            if score > want_s {
                want_s = score;
                want_p = cand;
            }
        }
        if p != want_p || s != want_s {
            scan_ok = false;
        }
    }

    criterion(
        "06 demand_model_numerics",
        grad_ok && bonus_ok && scan_ok,
        &format!(
            "grad rel {grad_worst:.2e}, bonus rel {bonus_worst:.2e}, scan exact {scan_ok}"
        ),
    );
}

fn gauss_jordan_inverse(m: &[f64], n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * 2 * n];
    for i in 0..n {
        for j in 0..n {
            a[i * 2 * n + j] = m[i * n + j];
        }
        a[i * 2 * n + n + i] = 1.0;
    }
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * 2 * n + col].abs() > a[piv * 2 * n + col].abs() {
                piv = r;
            }
        }
        if piv != col {
            for c in 0..2 * n {
                a.swap(col * 2 * n + c, piv * 2 * n + c);
            }
        }
        let d = a[col * 2 * n + col];
        for c in 0..2 * n {
            a[col * 2 * n + c] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * 2 * n + col];
            for c in 0..2 * n {
                a[r * 2 * n + c] -= f * a[col * 2 * n + c];
            }
        }
    }
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            inv[i * n + j] = a[i * 2 * n + n + j];
        }
    }
    inv
}

#[test]
fn c07_proxy_cost_checks() {
    use nhcrop::text_proxy::*;
    let w = ProxyWeights::default();
    let sum_ok = (w.sum() - 1.0).abs() <= 1e-12;

    let mk = |v: f64| SliceFeatures {
        sensitive_rate: v,
        dup_ratio: v,
        rep_ngram_ratio: v,
        near_dup_score: v,
        tox_proxy: v,
        license_prior: v,
        quality_risk: v,
        rarity_risk: v,
        meta: SliceMeta {
            n_docs: 10,
            avg_len: 40.0,
            label_entropy: 0.5,
            class_imbalance: 0.5,
        },
    };
    let ones_ok = proxy_cost(&mk(1.0), &w).unwrap() == 1.0;
    let zeros_ok = proxy_cost(&mk(0.0), &w).unwrap() == 0.0;

    // Twenty fixture slices with planted sensitive strings, duplicates, and
    // lexicon hits; the audit-style verify base must beat the metadata-style
    // coarse base as a predictor of the true cost.
    let words: HashSet<String> = ["hazardous", "offensive"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let cfg = SliceTableConfig {
        word_list: Some(words),
        ..SliceTableConfig::default()
    };
    let mut slices = Vec::new();
    for i in 0..20usize {
        let mut docs: Vec<Document> = (0..(8 + 3 * i))
            .map(|j| Document {
                label: if j % 2 == 0 { "a".into() } else { "b".into() },
                text: format!("slice {i} document {j} with ordinary market text"),
            })
            .collect();
        if i % 2 == 0 {
            docs[0].text = format!("contact user{i}@example.com about hazardous content");
        }
        if i % 3 == 0 {
            docs[2].text = docs[1].text.clone();
        }
        slices.push((format!("s__{i:02}"), "s".to_string(), docs));
    }
    let table = slices_to_table(&slices, &cfg).unwrap();
    let wins = (0..table.len())
        .filter(|&i| {
            (table.verify_bases[i] - table.true_costs[i]).abs()
                <= (table.coarse_bases[i] - table.true_costs[i]).abs()
        })
        .count();

    criterion(
        "07 proxy_cost_checks",
        sum_ok && ones_ok && zeros_ok && wins >= 18,
        &format!("weights sum {sum_ok}, extremes {ones_ok}/{zeros_ok}, verify wins {wins}/20"),
    );
}

#[test]
fn c08_clip_selection() {
    let rows = [
        (0.8, 0.0622),
        (0.5, 0.0570),
        (1.2, 0.0557),
        (0.3, 0.0525),
        (0.2, 0.0512),
        (0.1, 0.0512),
    ];
    let got = select_clip(&rows).unwrap();
    criterion("08 clip_selection", got == 0.8, &format!("selected {got}"));
}

#[test]
fn c09_stratification_integrity() {
    let mut cfg = ExperimentConfig::from_toml_str(
        r#"
        seeds = { start = 0, count = 8 }
        validation_seeds = [900]
        clip_sweep = false
        parallelism = 2
        methods = ["price_only", "nhcrop_clip", "always_verify"]

        [[settings]]
        preset = "syn_high"
        horizon = 120
        n_assets = 12
        "#,
    )
    .unwrap();
    cfg.output_dir = std::env::temp_dir();
    let out = nhcrop::audit::run_audit(&cfg).unwrap();

    // Partition: per method, bucket counts sum to seeds x horizon.
    let mut partition_ok = true;
    let mut recombine_ok = true;
    for method in ["price_only", "nhcrop_clip", "always_verify"] {
        let rows: Vec<_> = out
            .buckets
            .iter()
            .filter(|b| b.method_id == method)
            .collect();
        let total: usize = rows.iter().map(|b| b.n_rounds).sum();
        if total != 8 * 120 {
            partition_ok = false;
        }
        let weighted: f64 = rows
            .iter()
            .map(|b| b.mean_reward * b.n_rounds as f64)
            .sum::<f64>()
            / total as f64;
        let overall = out
            .aggregates
            .iter()
            .find(|a| a.method_id == method)
            .map(|a| a.mean_reward)
            .unwrap();
        if (weighted - overall).abs() > 1e-9 {
            recombine_ok = false;
        }
    }

    // CRN: the (context, asset, cost) stream is identical across methods.
    let mut crn_ok = true;
    for seed in 0..8u64 {
        let find = |m: &str| {
            out.trajectories
                .iter()
                .find(|t| t.method_id == m && t.seed == seed)
                .unwrap()
        };
        let a = find("price_only");
        let b = find("nhcrop_clip");
        let c = find("always_verify");
        for ((x, y), z) in a.records.iter().zip(&b.records).zip(&c.records) {
            let same = x.observation.context == y.observation.context
                && x.observation.context == z.observation.context
                && x.observation.asset.asset_id == y.observation.asset.asset_id
                && x.observation.asset.asset_id == z.observation.asset.asset_id
                && x.observation.coarse_cost == y.observation.coarse_cost
                && x.observation.coarse_cost == z.observation.coarse_cost
                && x.true_cost == y.true_cost
                && x.true_cost == z.true_cost;
            if !same {
                crn_ok = false;
            }
        }
    }

    criterion(
        "09 stratification_integrity",
        partition_ok && recombine_ok && crn_ok,
        &format!("partition {partition_ok}, recombine {recombine_ok}, crn {crn_ok}"),
    );
}

#[test]
fn c10_roi_audit_identity() {
    // Independent reconstruction of every verified round's counterfactual:
    // rebuild the event and asset table, re-derive the no-verification
    // branch from recorded fields, and recompute both rewards.
    let mut checked = 0usize;
    let mut ok = true;

    let mut syn = SettingConfig::preset("syn_high").unwrap();
    syn.horizon = 200;
    let lambda = nhcrop::policy::DEFAULT_LAMBDA;

    for method in ["always_verify", "tpiv", "nhcrop_clip", "random_verify"] {
        for seed in 0..6u64 {
            let table = synthetic_market(&syn, seed);
            let spec = PolicySpec::from_method_id(method).unwrap();
            let traj = run_cell(CellInputs {
                setting: &syn,
                table: &table,
                spec: &spec,
                demand: &DemandConfig::default(),
                belief: &BeliefConfig::default(),
                seed,
                diagnostics: true,
            })
            .unwrap();
            let stream = syn.stream_spec(table.len());
            let env = nhcrop::env::EnvState::new(syn.clone(), table.clone(), false).unwrap();
            for rec in &traj.records {
                let (Some(roi), Some(cf_price)) =
                    (rec.verification_roi, rec.counterfactual_price)
                else {
                    continue;
                };
                let event = gen_event(&stream, seed, rec.round_index);
                // Branch the policy would have taken without verification.
                let cf_proxy = if method == "nhcrop_clip" && rec.value_risk > rec.value_direct {
                    (rec.belief_mu + lambda * rec.belief_sigma).clamp(0.0, 1.0)
                } else {
                    rec.belief_mu.clamp(0.0, 1.0)
                };
                let prob = env.purchase_prob(&event, cf_price, cf_proxy).unwrap();
                let y_cf = event.purchase_u < prob;
                let r_without = if y_cf { cf_price - rec.true_cost } else { 0.0 };
                let expected = rec.reward - r_without;
                checked += 1;
                if (roi - expected).abs() > 1e-12 {
                    ok = false;
                }
                // Exact fee identity when price and outcome coincide.
                if cf_price == rec.decision.price && y_cf == rec.purchased
                    && (roi + traj.c_ver).abs() > 1e-12 {
                        ok = false;
                    }
            }
        }
    }
    criterion(
        "10 roi_audit_identity",
        ok && checked > 200,
        &format!("{checked} verified rounds reconstructed, exact {ok}"),
    );
}

#[test]
fn c11_determinism() {
    let toml = r#"
        seeds = { start = 0, count = 6 }
        validation_seeds = [900, 901]
        clip_grid = [0.5, 0.8]
        parallelism = PARALLELISM
        with_oracles = true

        [[settings]]
        preset = "syn_high"
        horizon = 80
        n_assets = 10

        [[settings]]
        preset = "rp_base"
        horizon = 60
        asset_table = "TABLE"
        "#;
    let dir = tempfile::tempdir().unwrap();
    let table_path = dir.path().join("rp.csv");
    let table = generate_table(&SynthTableSpec {
        n_assets: 40,
        seed: 7,
        ..SynthTableSpec::default()
    })
    .unwrap();
    let mut f = std::fs::File::create(&table_path).unwrap();
    table.write_csv(&mut f, 3).unwrap();

    let render = |par: usize| {
        toml.replace("PARALLELISM", &par.to_string())
            .replace("TABLE", &table_path.display().to_string().replace('\\', "/"))
    };
    let run = |par: usize, out: &std::path::Path| {
        let cfg = ExperimentConfig::from_toml_str(&render(par)).unwrap();
        let outputs = nhcrop::audit::run_audit(&cfg).unwrap();
        nhcrop::audit::write_audit_outputs(&outputs, out).unwrap();
    };
    let d1 = dir.path().join("a");
    let d2 = dir.path().join("b");
    let d8 = dir.path().join("c");
    run(1, &d1);
    run(1, &d2);
    run(8, &d8);

    let files = [
        "tables/final_setting_method_summary.csv",
        "tables/method_independent_relevance_buckets.csv",
        "tables/clip_tuning_summary.csv",
        "raw/seed_level_results.csv",
        "raw/round_level_results.csv",
        "raw/verification_events.csv",
    ];
    let mut identical = true;
    for rel in files {
        let a = std::fs::read(d1.join(rel)).unwrap();
        let b = std::fs::read(d2.join(rel)).unwrap();
        let c = std::fs::read(d8.join(rel)).unwrap();
        if a != b || a != c {
            identical = false;
        }
    }
    criterion(
        "11 determinism",
        identical,
        "two runs and parallelism 1 vs 8 byte-identical across all six files",
    );
}

#[test]
fn c12_full_default_audit() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let rp_path = dir.path().join("rp.csv");
    let ut_path = dir.path().join("ut.csv");
    generate_table(&SynthTableSpec {
        n_assets: 120,
        seed: 7,
        ..SynthTableSpec::default()
    })
    .unwrap()
    .write_csv(std::fs::File::create(&rp_path).unwrap(), 3)
    .unwrap();
    generate_table(&SynthTableSpec {
        n_assets: 120,
        seed: 9,
        with_utilities: true,
        cost_utility_corr: 0.15,
        ..SynthTableSpec::default()
    })
    .unwrap()
    .write_csv(std::fs::File::create(&ut_path).unwrap(), 3)
    .unwrap();

    let mut cfg = ExperimentConfig::default_full();
    cfg.with_oracles = true;
    cfg.parallelism = 4;
    cfg.seeds = SeedsSpec::Range { start: 0, count: 30 };
    for entry in &mut cfg.settings {
        match entry.preset.as_str() {
            "rp_base" | "rp_high_dv" => entry.asset_table = Some(rp_path.clone()),
            "ut_base" | "ut_high" => entry.asset_table = Some(ut_path.clone()),
            _ => {}
        }
    }
    cfg.validate().unwrap();
    let methods = cfg.method_ids();
    assert!(methods.len() >= 12, "roster has {} methods", methods.len());

    let out = nhcrop::audit::run_audit(&cfg).unwrap();
    let out_dir = dir.path().join("out");
    nhcrop::audit::write_audit_outputs(&out, &out_dir).unwrap();
    let elapsed = start.elapsed();

    // Every cell populated.
    let mut complete = true;
    for preset in ["syn_high", "rp_base", "rp_high_dv", "ut_base", "ut_high"] {
        for m in &methods {
            let n = out
                .summaries
                .iter()
                .filter(|s| s.setting_id == preset && &s.method_id == m)
                .count();
            if n != 30 {
                complete = false;
            }
        }
    }
    let files_ok = [
        "tables/final_setting_method_summary.csv",
        "tables/method_independent_relevance_buckets.csv",
        "tables/clip_tuning_summary.csv",
        "raw/seed_level_results.csv",
        "raw/round_level_results.csv",
        "raw/verification_events.csv",
    ]
    .iter()
    .all(|rel| out_dir.join(rel).is_file());

    criterion(
        "12 full_default_audit",
        complete && files_ok && elapsed.as_secs_f64() < 900.0,
        &format!(
            "5 settings x {} methods x 30 seeds in {:.1}s, files {files_ok}",
            methods.len(),
            elapsed.as_secs_f64()
        ),
    );
}
