//! Solve the worked market with all three methods and print their
//! agreement: strong-duality branch and bound, the complementarity
//! benchmark, and the exhaustive oracle.
//!
//! Run with: cargo run --example solve

use bilevel_maas::bnb::{brute_force_oracle, solve_bardmoore, solve_sdbb, BnbConfig, BranchRule};
use bilevel_maas::model::{
    EffectKind, LeaderBounds, MarketInstance, ModeSpec, NetworkEffect, ProviderBid, TravelerBid,
};

fn example_market(kind: EffectKind) -> MarketInstance {
    let effect = match kind {
        EffectKind::Linear => NetworkEffect {
            kind,
            a2_t: 0.0,
            a1_t: -0.025,
            a0_t: 10.0,
            a2_p: 0.0,
            a1_p: 0.2,
            a0_p: 1.0,
        },
        EffectKind::Quadratic => NetworkEffect {
            kind,
            a2_t: 0.025,
            a1_t: -0.2,
            a0_t: 10.0,
            a2_p: 0.2,
            a1_p: 0.0,
            a0_p: 1.0,
        },
    };
    MarketInstance {
        modes: vec![
            ModeSpec { mode_id: 1, commercial_speed: 0.2, inconvenience_rate: 0.1 },
            ModeSpec { mode_id: 2, commercial_speed: 0.25, inconvenience_rate: 0.0 },
        ],
        travelers: vec![
            TravelerBid {
                traveler_id: 1,
                distance: 40.0,
                service_time: 160.0,
                bid_price: 2.0,
                expenditure_budget: 20.0,
                delay_budget: 50.0,
                inconvenience_tolerance: 200.0,
                reserve_price: 2.5,
                waiting_cost_rate: 2.0,
            },
            TravelerBid {
                traveler_id: 2,
                distance: 60.0,
                service_time: 300.0,
                bid_price: 4.0,
                expenditure_budget: 40.0,
                delay_budget: 30.0,
                inconvenience_tolerance: 300.0,
                reserve_price: 4.5,
                waiting_cost_rate: 2.2,
            },
        ],
        providers: vec![
            ProviderBid {
                mode_id: 1,
                provider_id: 1,
                capacity: 25.0,
                sell_price: 1.5,
                operating_budget: 3.0,
                operating_cost: 0.1,
                reserve_price: 0.5,
                idle_cost_rate: 0.15,
            },
            ProviderBid {
                mode_id: 2,
                provider_id: 1,
                capacity: 30.0,
                sell_price: 2.0,
                operating_budget: 5.5,
                operating_cost: 0.0,
                reserve_price: 1.0,
                idle_cost_rate: 0.1,
            },
        ],
        bounds: LeaderBounds {
            p_min: 1.0,
            p_max: 4.5,
            q_min: 1.0,
            q_max: 2.2,
            gap_lower: 0.0,
            gap_upper: 55.0,
        },
        effect,
    }
}

fn main() {
    for kind in [EffectKind::Linear, EffectKind::Quadratic] {
        let inst = example_market(kind);
        let oracle = brute_force_oracle(&inst, kind).unwrap();
        println!("{kind} effects, oracle optimum {:.6}", oracle.lb);
        for rule in [BranchRule::Bp, BranchRule::Diffob, BranchRule::Wi] {
            let cfg = BnbConfig {
                rule,
                model: kind,
                ..BnbConfig::default()
            };
            let rep = solve_sdbb(&inst, &cfg).unwrap();
            println!(
                "  sdbb/{rule}: k={} LB={:.6} gap={:.2}% T={:.3}s",
                rep.k,
                rep.lb,
                100.0 * rep.gap,
                rep.wall_time_s
            );
        }
        let cfg = BnbConfig {
            model: kind,
            ..BnbConfig::default()
        };
        let rep = solve_bardmoore(&inst, &cfg).unwrap();
        println!(
            "  bardmoore: k={} LB={:.6} gap={:.2}% T={:.3}s",
            rep.k,
            rep.lb,
            100.0 * rep.gap,
            rep.wall_time_s
        );
        let trace_line = serde_json::to_string(&rep.trace[0]).unwrap();
        println!("  first trace entry: {trace_line}");
    }
}
