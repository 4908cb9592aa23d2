mod common;

use bilevel_maas::bnb::{
    all_reject, brute_force_oracle, evaluate_completion, relative_gap, select_branch,
    solve_bardmoore, solve_sdbb, BnbConfig, BnbError, BranchRule, BranchTarget, Termination,
};
use bilevel_maas::follower::{audit_followers, FollowerAudit};
use bilevel_maas::model::{EffectKind, MarketInstance};
use bilevel_maas::reform::{kkt_stationarity_residual, FixedSets};
use common::example_instance;

fn all_accept(inst: &MarketInstance) -> FixedSets {
    let mut f = FixedSets::empty();
    for t in &inst.travelers {
        f.trav_fixed1.insert(t.traveler_id);
    }
    for p in &inst.providers {
        f.prov_fixed1.insert((p.mode_id, p.provider_id));
    }
    f
}

#[test]
fn oracle_linear_example_frozen() {
    let inst = example_instance(EffectKind::Linear);
    let rep = brute_force_oracle(&inst, EffectKind::Linear).unwrap();
    assert_eq!(rep.status, Termination::Optimal);
    assert_eq!(rep.k, 16);
    assert!(rep.trace.is_empty());
    assert!((rep.lb - 22.5).abs() <= 1e-9);
    assert!((rep.ub - rep.lb).abs() <= 1e-12);
    assert_eq!(rep.gap, 0.0);
    let inc = rep.incumbent.unwrap();
    assert_eq!(inc.u, vec![true, true]);
    assert_eq!(inc.w, vec![true, false]);
    assert!((inc.x[0] - 1.0).abs() <= 1e-9);
    assert!((inc.x[1] - 5.0 / 6.0).abs() <= 1e-9);
    assert!((inc.y[0] - 1.0).abs() <= 1e-9);
    assert!(inc.y[1].abs() <= 1e-9);
    assert!((inc.delta - 5.0).abs() <= 1e-9);
    assert!(inc.gap_residual(&inst) <= 1e-9);
}

#[test]
fn oracle_quadratic_example_frozen() {
    let inst = example_instance(EffectKind::Quadratic);
    let rep = brute_force_oracle(&inst, EffectKind::Quadratic).unwrap();
    assert_eq!(rep.status, Termination::Optimal);
    assert!((rep.lb - 1051.0 / 44.0).abs() <= 1e-9);
    let inc = rep.incumbent.unwrap();
    assert!((inc.delta - 29.0 / 66.0).abs() <= 1e-9);
    assert!((inc.x[0] - 113.0 / 132.0).abs() <= 1e-9);
    assert!((inc.x[1] - 535.0 / 792.0).abs() <= 1e-9);
    assert!((inc.y[0] - 1129.0 / 1650.0).abs() <= 1e-9);
    assert!(inc.y[1].abs() <= 1e-9);
    let audit = audit_followers(&inst, &inc, 1e-6);
    assert!(audit.all_optimal(), "worst gap {}", audit.worst_gap());
}

#[test]
fn completion_values_frozen() {
    let inst = example_instance(EffectKind::Linear);
    let dec = evaluate_completion(&inst, &all_accept(&inst), EffectKind::Linear)
        .unwrap()
        .unwrap();
    assert!((dec.leader_profit(&inst) + 37.5).abs() <= 1e-6);
    let dec = evaluate_completion(&inst, &all_reject(&inst), EffectKind::Linear)
        .unwrap()
        .unwrap();
    assert!(dec.leader_profit(&inst).abs() <= 1e-9);

    let quad = example_instance(EffectKind::Quadratic);
    let dec = evaluate_completion(&quad, &all_reject(&quad), EffectKind::Quadratic)
        .unwrap()
        .unwrap();
    assert!(dec.leader_profit(&quad).abs() <= 1e-9);
    assert!(dec.delta.abs() <= 1e-9);
}

#[test]
fn sdbb_linear_tree_frozen() {
    let inst = example_instance(EffectKind::Linear);
    let rep = solve_sdbb(&inst, &BnbConfig::default()).unwrap();
    assert_eq!(rep.status, Termination::Optimal);
    assert!((rep.lb - 22.5).abs() <= 1e-9);
    assert!(rep.gap <= 1e-6);
    assert_eq!(rep.k, 3);
    assert_eq!(rep.trace.len(), 3);

    let root = &rep.trace[0];
    assert_eq!((root.id, root.parent, root.branch.as_str()), (0, None, "root"));
    assert!((root.bound - 30.0).abs() <= 1e-6);
    assert_eq!(root.status, "branched");

    let accept = &rep.trace[1];
    assert_eq!(accept.branch, "w_1_1=1");
    assert_eq!(accept.parent, Some(0));
    assert!((accept.bound - 22.5).abs() <= 1e-6);
    assert_eq!(accept.status, "incumbent");

    let reject = &rep.trace[2];
    assert_eq!(reject.branch, "w_1_1=0");
    assert!(reject.bound.abs() <= 1e-6);
    assert_eq!(reject.status, "pruned");

    let inc = rep.incumbent.unwrap();
    let audit = audit_followers(&inst, &inc, 1e-4);
    assert!(audit.all_optimal());
    assert!(inc.gap_residual(&inst) <= 1e-6);
}

#[test]
fn sdbb_rules_agree_on_example() {
    let inst = example_instance(EffectKind::Linear);
    for rule in [BranchRule::Bp, BranchRule::Diffob, BranchRule::Wi] {
        let cfg = BnbConfig {
            rule,
            ..BnbConfig::default()
        };
        let rep = solve_sdbb(&inst, &cfg).unwrap();
        assert!((rep.lb - 22.5).abs() <= 1e-9, "rule {rule}: lb {}", rep.lb);
        assert_eq!(rep.k, 3, "rule {rule}");
    }
}

#[test]
fn sdbb_quadratic_closes_on_oracle_value() {
    let inst = example_instance(EffectKind::Quadratic);
    let cfg = BnbConfig {
        model: EffectKind::Quadratic,
        ..BnbConfig::default()
    };
    let rep = solve_sdbb(&inst, &cfg).unwrap();
    assert_eq!(rep.status, Termination::Optimal);
    assert!((rep.lb - 1051.0 / 44.0).abs() <= 1e-9);
    assert!(rep.gap <= 1e-6);
    assert_eq!(rep.k, 11);
    let inc = rep.incumbent.unwrap();
    let audit = audit_followers(&inst, &inc, 1e-4);
    assert!(audit.all_optimal());
    assert!(inc.gap_residual(&inst) <= 1e-6);
}

#[test]
fn bardmoore_linear_example() {
    let inst = example_instance(EffectKind::Linear);
    let rep = solve_bardmoore(&inst, &BnbConfig::default()).unwrap();
    assert_eq!(rep.status, Termination::Optimal);
    assert!((rep.lb - 22.5).abs() <= 1e-6);
    assert_eq!(rep.k, 5);
    let inc = rep.incumbent.unwrap();
    assert!(inc.multipliers.is_some());
    assert!(kkt_stationarity_residual(&inst, &inc, EffectKind::Linear) <= 1e-6);
}

#[test]
fn bardmoore_quadratic_example() {
    let inst = example_instance(EffectKind::Quadratic);
    let cfg = BnbConfig {
        model: EffectKind::Quadratic,
        ..BnbConfig::default()
    };
    let rep = solve_bardmoore(&inst, &cfg).unwrap();
    assert_eq!(rep.status, Termination::Optimal);
    assert!((rep.lb - 1051.0 / 44.0).abs() <= 1e-6);
    let inc = rep.incumbent.unwrap();
    assert!(kkt_stationarity_residual(&inst, &inc, EffectKind::Quadratic) <= 1e-4);
}

#[test]
fn methods_agree_on_perturbed_examples() {
    let mut variants: Vec<(MarketInstance, EffectKind)> = Vec::new();
    let mut v = example_instance(EffectKind::Linear);
    v.providers[0].sell_price = 2.1;
    variants.push((v, EffectKind::Linear));
    let mut v = example_instance(EffectKind::Linear);
    v.bounds.gap_upper = 10.0;
    variants.push((v, EffectKind::Linear));
    let mut v = example_instance(EffectKind::Linear);
    v.travelers[1].bid_price = 3.0;
    variants.push((v, EffectKind::Linear));
    let mut v = example_instance(EffectKind::Quadratic);
    v.effect.a2_t = 0.05;
    variants.push((v, EffectKind::Quadratic));
    let mut v = example_instance(EffectKind::Quadratic);
    v.bounds.gap_upper = 20.0;
    variants.push((v, EffectKind::Quadratic));

    for (idx, (inst, model)) in variants.iter().enumerate() {
        let oracle = brute_force_oracle(inst, *model).unwrap();
        let cfg = BnbConfig {
            model: *model,
            ..BnbConfig::default()
        };
        let sd = solve_sdbb(inst, &cfg).unwrap();
        let bm = solve_bardmoore(inst, &cfg).unwrap();
        let scale = oracle.lb.abs().max(1.0);
        assert!(
            (sd.lb - oracle.lb).abs() <= 1e-6 * scale,
            "variant {idx}: sdbb {} vs oracle {}",
            sd.lb,
            oracle.lb
        );
        assert!(
            (bm.lb - oracle.lb).abs() <= 1e-6 * scale,
            "variant {idx}: bardmoore {} vs oracle {}",
            bm.lb,
            oracle.lb
        );
    }
}

#[test]
fn select_branch_applies_each_rule() {
    let inst = example_instance(EffectKind::Linear);
    let fixed = FixedSets::empty();
    let audit = FollowerAudit {
        v_travel: vec![0, 1],
        v_tsp: vec![0, 1],
        traveler_gaps: vec![9.0, 2.0],
        provider_gaps: vec![1.0, 5.0],
    };
    // Providers take precedence; beta = (1.5, 2.0), gaps = (1, 5).
    let pick = select_branch(&inst, &fixed, &audit, BranchRule::Bp, 0.5);
    assert_eq!(pick, Some(BranchTarget::Provider(0)));
    let pick = select_branch(&inst, &fixed, &audit, BranchRule::Diffob, 0.5);
    assert_eq!(pick, Some(BranchTarget::Provider(1)));
    let pick = select_branch(&inst, &fixed, &audit, BranchRule::Wi, 1.0);
    assert_eq!(pick, Some(BranchTarget::Provider(1)));
    let pick = select_branch(&inst, &fixed, &audit, BranchRule::Wi, 0.0);
    assert_eq!(pick, Some(BranchTarget::Provider(0)));
    // Balanced scores tie; ties keep the lowest index.
    let pick = select_branch(&inst, &fixed, &audit, BranchRule::Wi, 0.5);
    assert_eq!(pick, Some(BranchTarget::Provider(0)));

    // With both providers decided the rules fall through to travelers:
    // b = (2, 4), gaps = (9, 2).
    let mut decided = FixedSets::empty();
    decided.prov_fixed1.insert((1, 1));
    decided.prov_fixed0.insert((2, 1));
    let pick = select_branch(&inst, &decided, &audit, BranchRule::Bp, 0.5);
    assert_eq!(pick, Some(BranchTarget::Traveler(1)));
    let pick = select_branch(&inst, &decided, &audit, BranchRule::Diffob, 0.5);
    assert_eq!(pick, Some(BranchTarget::Traveler(0)));

    // Everything decided: nothing to branch on.
    let everything = all_reject(&inst);
    assert_eq!(
        select_branch(&inst, &everything, &audit, BranchRule::Bp, 0.5),
        None
    );
}

#[test]
fn traces_are_deterministic_and_well_formed() {
    let inst = example_instance(EffectKind::Quadratic);
    let cfg = BnbConfig {
        model: EffectKind::Quadratic,
        ..BnbConfig::default()
    };
    let a = solve_sdbb(&inst, &cfg).unwrap();
    let b = solve_sdbb(&inst, &cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&a.trace).unwrap(),
        serde_json::to_string(&b.trace).unwrap()
    );
    assert_eq!(a.k, a.trace.len());

    let allowed = [
        "branched",
        "incumbent",
        "pruned",
        "completed",
        "infeasible",
        "stalled",
    ];
    let mut bounds = std::collections::HashMap::new();
    for (pos, entry) in a.trace.iter().enumerate() {
        if pos == 0 {
            assert_eq!((entry.id, entry.parent, entry.branch.as_str()), (0, None, "root"));
        }
        assert!(allowed.contains(&entry.status.as_str()), "{}", entry.status);
        if let Some(parent) = entry.parent {
            assert!(parent < entry.id);
            let parent_bound: f64 = bounds[&parent];
            assert!(entry.bound <= parent_bound + 1e-9);
        }
        bounds.insert(entry.id, entry.bound);
    }
}

#[test]
fn zero_time_limit_reports_time_limit() {
    let inst = example_instance(EffectKind::Linear);
    let cfg = BnbConfig {
        time_limit_s: 0.0,
        ..BnbConfig::default()
    };
    let rep = solve_sdbb(&inst, &cfg).unwrap();
    assert_eq!(rep.status, Termination::TimeLimit);
    assert_eq!(rep.k, 0);
    assert!(rep.lb.abs() <= 1e-9);
    assert!(rep.ub.is_infinite());
    assert_eq!(rep.gap, 1.0);
}

#[test]
fn oracle_rejects_large_instances() {
    let mut inst = example_instance(EffectKind::Linear);
    for id in 3..=17 {
        let mut extra = inst.travelers[0].clone();
        extra.traveler_id = id;
        inst.travelers.push(extra);
    }
    let err = brute_force_oracle(&inst, EffectKind::Linear).unwrap_err();
    assert!(matches!(err, BnbError::TooLarge { max: 16, got: 19 }));
}

#[test]
fn relative_gap_conventions() {
    assert!((relative_gap(22.5, 30.0) - 1.0 / 3.0).abs() <= 1e-12);
    assert_eq!(relative_gap(0.0, 30.0), 1.0);
    assert_eq!(relative_gap(-2.0, 7.0), 1.0);
    assert_eq!(relative_gap(5.0, 5.0), 0.0);
    assert_eq!(relative_gap(22.5, 22.5 + 1e-13), 0.0);
}
