mod common;

use bilevel_maas::instgen::{
    canonical_modes, example1, generate, GroupSpec, Overrides, MODE_CATALOG, PROVIDER_CATALOG,
};
use bilevel_maas::model::{validate_instance, EffectKind, MarketInstance};

fn spec(n_travelers: usize, n_providers: usize, seed: u64) -> GroupSpec {
    GroupSpec::new(n_travelers, n_providers, EffectKind::Linear, seed)
}

/// Kolmogorov-Smirnov distance between the sample and U[0, 1].
fn ks_uniform(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let below = i as f64 / n;
            let above = (i + 1) as f64 / n;
            (x - below).abs().max((above - x).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn example1_matches_the_worked_fixture() {
    for kind in [EffectKind::Linear, EffectKind::Quadratic] {
        assert_eq!(example1(kind), common::example_instance(kind));
        assert!(validate_instance(&example1(kind)).is_ok());
    }
}

#[test]
fn example1_headline_quantities() {
    let inst = example1(EffectKind::Linear);
    let t1 = &inst.travelers[0];
    let q1 = t1.distance * t1.distance / t1.service_time;
    assert!((q1 - 10.0).abs() < 1e-12);
    let total: f64 = inst.providers.iter().map(|p| p.capacity).sum();
    assert_eq!(inst.bounds.gap_upper, total);
    assert_eq!(inst.bounds.gap_upper, 55.0);
}

#[test]
fn same_seed_reproduces_the_instance() {
    let a = generate(&spec(6, 4, 42));
    let b = generate(&spec(6, 4, 42));
    assert_eq!(a, b);
}

#[test]
fn different_seeds_differ() {
    let a = generate(&spec(6, 4, 42));
    let b = generate(&spec(6, 4, 43));
    assert_ne!(a, b);
}

#[test]
fn entity_streams_are_independent_of_group_shape() {
    let small = generate(&spec(2, 2, 9));
    let large = generate(&spec(7, 7, 9));

    for (i, t) in small.travelers.iter().enumerate() {
        assert_eq!(t, &large.travelers[i], "traveler {} drifted", i + 1);
    }
    for p in &small.providers {
        let twin = large
            .providers
            .iter()
            .find(|c| (c.mode_id, c.provider_id) == (p.mode_id, p.provider_id))
            .expect("shared provider present in the larger group");
        assert_eq!(p, twin, "provider ({},{}) drifted", p.mode_id, p.provider_id);
    }
}

#[test]
fn round_robin_shape_and_naming() {
    let g = spec(4, 7, 0);
    assert_eq!(g.providers_per_mode, vec![1, 1, 1, 2, 2]);
    assert_eq!(g.name(), "MaaS-4-7");

    let inst = generate(&g);
    assert_eq!(inst.modes, canonical_modes());
    assert_eq!(inst.travelers.len(), 4);
    let ids: Vec<(usize, usize)> = inst
        .providers
        .iter()
        .map(|p| (p.mode_id, p.provider_id))
        .collect();
    assert_eq!(
        ids,
        vec![(1, 1), (2, 1), (3, 1), (4, 1), (4, 2), (5, 1), (5, 2)]
    );
    for (k, t) in inst.travelers.iter().enumerate() {
        assert_eq!(t.traveler_id, k + 1);
    }
}

#[test]
fn group_names_parse_and_reject() {
    let g = GroupSpec::from_name("MaaS-10-5", EffectKind::Linear, 1).unwrap();
    assert_eq!(g.n_travelers, 10);
    assert_eq!(g.providers_per_mode, vec![1, 1, 1, 1, 1]);
    assert_eq!(g.name(), "MaaS-10-5");

    for bad in ["Maas-10-5", "MaaS-10", "MaaS-x-5", "MaaS-0-5", "10-5"] {
        assert!(
            GroupSpec::from_name(bad, EffectKind::Linear, 1).is_err(),
            "{bad} should be rejected"
        );
    }
}

fn assert_within_catalog(inst: &MarketInstance) {
    let v_fast = MODE_CATALOG.iter().map(|m| m.0).fold(f64::NEG_INFINITY, f64::max);
    let v_slow = MODE_CATALOG.iter().map(|m| m.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-9;

    for t in &inst.travelers {
        let q = t.distance * t.distance / t.service_time;
        assert!((1.0..=18.0).contains(&t.distance));
        assert!(t.service_time >= t.distance / v_fast - tol);
        assert!(t.service_time <= t.distance / v_slow + tol);
        assert!((1.0..=4.0).contains(&t.bid_price));
        let premium = t.reserve_price - t.bid_price;
        assert!((1.5 - tol..=4.0 + tol).contains(&premium));
        let offset = t.expenditure_budget - t.bid_price * q;
        assert!((-0.5 - tol..=1.5 + tol).contains(&offset));
        assert!(t.expenditure_budget > 0.0);
        assert!((0.02..=0.05).contains(&t.waiting_cost_rate));
        assert!(t.delay_budget >= 0.0 && t.delay_budget <= 100.0 / t.bid_price + tol);
        assert!(
            t.inconvenience_tolerance >= 0.0
                && t.inconvenience_tolerance <= 100.0 * t.distance / t.bid_price + tol
        );
    }

    for p in &inst.providers {
        let (sell_range, capacity_range) = PROVIDER_CATALOG[p.mode_id - 1];
        assert!((sell_range[0]..=sell_range[1]).contains(&p.sell_price));
        assert!((capacity_range[0]..=capacity_range[1]).contains(&p.capacity));
        let offset = p.operating_budget - p.sell_price * p.capacity;
        assert!((-0.75 - tol..=2.75 + tol).contains(&offset));
        assert!((1.0..=2.0).contains(&p.idle_cost_rate));
        let discount = p.sell_price - p.reserve_price;
        assert!((0.5 - tol..=1.0 + tol).contains(&discount));
        assert!(p.operating_cost >= 0.0 && p.operating_cost < p.reserve_price);
    }

    let b_max = inst
        .travelers
        .iter()
        .map(|t| t.bid_price)
        .fold(f64::NEG_INFINITY, f64::max);
    let beta_max = inst
        .providers
        .iter()
        .map(|p| p.sell_price)
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = inst.providers.iter().map(|p| p.capacity).sum();
    assert_eq!(inst.bounds.p_min, 1.0);
    assert_eq!(inst.bounds.q_min, 1.0);
    assert!((inst.bounds.p_max - (b_max + 0.5)).abs() < tol);
    assert!((inst.bounds.q_max - (beta_max + 0.2)).abs() < tol);
    assert_eq!(inst.bounds.gap_lower, 0.0);
    assert!((inst.bounds.gap_upper - total.min(400.0)).abs() < tol);
}

#[test]
fn draws_stay_inside_the_documented_ranges() {
    for seed in 0..40 {
        for kind in [EffectKind::Linear, EffectKind::Quadratic] {
            let mut g = GroupSpec::new(6, 4, kind, seed);
            g.providers_per_mode = vec![1, 1, 1, 1, 0];
            let inst = generate(&g);
            assert_within_catalog(&inst);
            assert!(validate_instance(&inst).is_ok());
        }
    }
}

#[test]
fn traveler_fields_are_uniform_on_their_ranges() {
    let inst = generate(&spec(10_000, 5, 123));
    let v_fast = MODE_CATALOG.iter().map(|m| m.0).fold(f64::NEG_INFINITY, f64::max);
    let v_slow = MODE_CATALOG.iter().map(|m| m.0).fold(f64::INFINITY, f64::min);

    let unit = |field: &dyn Fn(&bilevel_maas::model::TravelerBid) -> f64| -> Vec<f64> {
        inst.travelers.iter().map(field).collect()
    };
    let samples: Vec<(&str, Vec<f64>)> = vec![
        ("distance", unit(&|t| (t.distance - 1.0) / 17.0)),
        (
            "service_time",
            unit(&|t| {
                let lo = t.distance / v_fast;
                let hi = t.distance / v_slow;
                (t.service_time - lo) / (hi - lo)
            }),
        ),
        ("bid_price", unit(&|t| (t.bid_price - 1.0) / 3.0)),
        (
            "reserve_premium",
            unit(&|t| (t.reserve_price - t.bid_price - 1.5) / 2.5),
        ),
        (
            "budget_offset",
            unit(&|t| {
                let q = t.distance * t.distance / t.service_time;
                (t.expenditure_budget - t.bid_price * q + 0.5) / 2.0
            }),
        ),
        (
            "waiting_cost",
            unit(&|t| (t.waiting_cost_rate - 0.02) / 0.03),
        ),
        ("delay_budget", unit(&|t| t.delay_budget * t.bid_price / 100.0)),
        (
            "inconvenience",
            unit(&|t| t.inconvenience_tolerance * t.bid_price / (100.0 * t.distance)),
        ),
    ];
    for (name, xs) in samples {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= -1e-9 && hi <= 1.0 + 1e-9, "{name} leaves its range");
        let d = ks_uniform(xs);
        assert!(d < 0.05, "{name} KS distance {d} exceeds 0.05");
    }
}

#[test]
fn overrides_redirect_the_draws() {
    let mut g = spec(5, 5, 7);
    g.overrides = Overrides {
        bid_price: Some([5.0, 8.0]),
        sell_price: Some(vec![[2.0, 3.0]; 5]),
        gap_lower: Some(2.0),
        gap_upper: Some(30.0),
        ..Overrides::default()
    };
    let inst = generate(&g);
    for t in &inst.travelers {
        assert!((5.0..=8.0).contains(&t.bid_price));
    }
    for p in &inst.providers {
        assert!((2.0..=3.0).contains(&p.sell_price));
    }
    assert_eq!(inst.bounds.gap_lower, 2.0);
    assert_eq!(inst.bounds.gap_upper, 30.0);
    assert!(inst.bounds.p_max <= 8.5 + 1e-9);
    assert!(inst.bounds.q_max <= 3.2 + 1e-9);
    assert!(validate_instance(&inst).is_ok());
}

#[test]
fn quadratic_absorption_vertex_sits_at_the_gap_cap() {
    let g = GroupSpec::new(5, 3, EffectKind::Quadratic, 11);
    let inst = generate(&g);
    let e = &inst.effect;
    let vertex = -e.a1_t / (2.0 * e.a2_t);
    assert!((vertex - inst.bounds.gap_upper).abs() < 1e-9);
    assert!((e.a2_p - 0.1 / inst.bounds.gap_upper).abs() < 1e-12);
    assert!(e.psi(inst.bounds.gap_upper) >= 0.0);
    assert!(e.phi(inst.bounds.gap_upper) >= 0.0);
}

#[test]
fn gap_cap_saturates_for_large_fleets() {
    for kind in [EffectKind::Linear, EffectKind::Quadratic] {
        let inst = generate(&GroupSpec::new(2, 15, kind, 3));
        let total: f64 = inst.providers.iter().map(|p| p.capacity).sum();
        assert!(total > 400.0, "fleet of 15 should exceed the saturation cap");
        assert_eq!(inst.bounds.gap_upper, 400.0);
        assert!(inst.effect.psi(400.0) >= 0.0);
        assert!(validate_instance(&inst).is_ok());
    }
}

#[test]
fn generated_markets_are_solvable_and_methods_agree() {
    use bilevel_maas::bnb::{brute_force_oracle, solve_sdbb, BnbConfig};

    for seed in [1, 2, 3] {
        for kind in [EffectKind::Linear, EffectKind::Quadratic] {
            let g = GroupSpec::new(3, 2, kind, seed);
            let inst = generate(&g);
            let oracle = brute_force_oracle(&inst, kind).unwrap();
            let cfg = BnbConfig {
                model: kind,
                ..BnbConfig::default()
            };
            let report = solve_sdbb(&inst, &cfg).unwrap();
            let scale = oracle.lb.abs().max(1.0);
            let tol = match kind {
                EffectKind::Linear => 1e-6,
                EffectKind::Quadratic => 1e-3,
            };
            assert!(
                (report.lb - oracle.lb).abs() <= tol * scale,
                "seed {seed} {kind}: sdbb {} vs oracle {}",
                report.lb,
                oracle.lb
            );
        }
    }
}
